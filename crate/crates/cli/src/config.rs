//! Flat `key = value` configuration merged with command-line overrides.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::CliError;

const UNHASHED: [&str; 3] = ["out", "json", "threads"];

/// Resolved settings of one run. Keys use dashes, as the flags do.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(&format!("line {}", lineno + 1), "expected `key = value`"))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(CliError::config(&format!("line {}", lineno + 1), "empty key"));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets `key` when a flag was given; flags win over file values.
    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(normalize(key), v.to_string());
        }
    }

    pub fn set_flag(&mut self, key: &str, on: bool) {
        if on {
            self.values.insert(normalize(key), "true".into());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| CliError::config(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| CliError::config(key, "missing required value"))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(CliError::config(key, format!("expected a boolean, found `{v}`"))),
            },
        }
    }

    /// Comma-separated list; empty when absent.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    }

    /// SHA-256 of the resolved settings in canonical `key=value` form.
    /// Output paths and the thread count do not affect results and are left
    /// out.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.values.iter().filter(|(k, _)| !UNHASHED.contains(&k.as_str())) {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut c = RunConfig::parse("# comment\nm = 100\nscheme=srht # trailing\nmaster_seed = 4\n").unwrap();
        assert_eq!(c.get::<usize>("m").unwrap(), Some(100));
        assert_eq!(c.raw("master-seed"), Some("4"));
        c.set_opt("m", Some(200));
        c.set_opt::<usize>("scheme", None);
        assert_eq!(c.get::<usize>("m").unwrap(), Some(200));
        assert_eq!(c.raw("scheme"), Some("srht"));
    }

    #[test]
    fn errors_name_the_key() {
        let c = RunConfig::parse("m = ten").unwrap();
        match c.get::<usize>("m").unwrap_err() {
            CliError::Config { key, .. } => assert_eq!(key, "m"),
            e => panic!("{e:?}"),
        }
        assert!(RunConfig::parse("novalue").is_err());
    }

    #[test]
    fn hash_is_order_free() {
        let a = RunConfig::parse("a=1\nb=2").unwrap();
        let b = RunConfig::parse("b=2\na=1").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), RunConfig::parse("a=1\nb=3").unwrap().hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.set_opt("out", Some("/tmp/x.csv"));
        assert_eq!(a.hash(), c.hash());
    }
}
