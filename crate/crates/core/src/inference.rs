//! Sketch-size rules driven by the power of a two-sided test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::normal_quantile;

/// Inputs to the size rules, as collected by the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRuleInputs {
    pub n: usize,
    pub q: usize,
    pub c_m: f64,
    pub alpha_bar: f64,
    pub gamma_bar: f64,
    pub tau_inf: f64,
    pub effect: f64,
    pub se_estimate: f64,
    pub m1: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum M1Variant {
    /// `C_m q ln q`
    LogQ,
    /// `C_m q²`
    QSquared,
}

/// Ceiling that ignores relative float noise below `1e-9`, so products
/// that are integers in exact arithmetic are not bumped up by one.
pub(crate) fn ceil_guarded(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn check_prob(what: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfDomain { what, value: p })
    }
}

/// `S(α, γ) = Φ^{-1}(γ) + Φ^{-1}(1 - α)`.
///
/// ```
/// use sketchreg::inference::s_factor;
/// let s = s_factor(0.05, 0.8).unwrap();
/// assert!((s * s - 6.18).abs() < 0.01);
/// ```
pub fn s_factor(alpha: f64, gamma: f64) -> Result<f64> {
    check_prob("alpha", alpha)?;
    check_prob("gamma", gamma)?;
    Ok(normal_quantile(gamma)? + normal_quantile(1.0 - alpha)?)
}

/// Preliminary sketch size from the instrument count.
pub fn m1_rule(q: usize, c_m: f64, variant: M1Variant) -> Result<usize> {
    if !(c_m > 0.0) || !c_m.is_finite() {
        return Err(Error::OutOfDomain { what: "C_m", value: c_m });
    }
    let qf = q as f64;
    let raw = match variant {
        M1Variant::LogQ => {
            if q < 2 {
                return Err(Error::OutOfDomain { what: "q", value: qf });
            }
            c_m * qf * qf.ln()
        }
        M1Variant::QSquared => c_m * qf * qf,
    };
    Ok(ceil_guarded(raw) as usize)
}

/// `⌈m1 · S² · (se / effect)²⌉`: the size at which a test of the given
/// effect reaches power `gamma` at level `alpha`.
pub fn m2_rule(m1: usize, se_ctbeta: f64, effect: f64, alpha: f64, gamma: f64) -> Result<usize> {
    if effect == 0.0 || !effect.is_finite() {
        return Err(Error::ZeroEffect);
    }
    if !(se_ctbeta >= 0.0) || !se_ctbeta.is_finite() {
        return Err(Error::OutOfDomain { what: "standard error", value: se_ctbeta });
    }
    let s = s_factor(alpha, gamma)?;
    let ratio = se_ctbeta / effect;
    Ok(ceil_guarded(m1 as f64 * s * s * ratio * ratio) as usize)
}

/// Data-oblivious size `round(n S² / τ²)`.
///
/// ```
/// use sketchreg::inference::m3_rule;
/// assert_eq!(m3_rule(247_199, 0.05, 0.8, 10.0).unwrap(), 15_283);
/// ```
pub fn m3_rule(n: usize, alpha: f64, gamma: f64, tau_inf: f64) -> Result<usize> {
    if !(tau_inf > 0.0) || !tau_inf.is_finite() {
        return Err(Error::OutOfDomain { what: "tau", value: tau_inf });
    }
    let s = s_factor(alpha, gamma)?;
    Ok((n as f64 * s * s / (tau_inf * tau_inf)).round() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_factor_values() {
        assert_eq!(s_factor(0.5, 0.5).unwrap(), 0.0);
        assert!((s_factor(0.025, 0.975).unwrap() - 3.919_927_969_080_108).abs() < 1e-9);
        assert!(s_factor(0.0, 0.5).is_err());
        assert!(s_factor(0.5, 1.0).is_err());
    }

    #[test]
    fn m1_values() {
        assert_eq!(m1_rule(40, 1.0, M1Variant::QSquared).unwrap(), 1600);
        assert_eq!(m1_rule(40, 1.0, M1Variant::LogQ).unwrap(), 148);
        assert_eq!(m1_rule(2, 10.0, M1Variant::LogQ).unwrap(), 14);
        assert!(m1_rule(1, 10.0, M1Variant::LogQ).is_err());
    }

    #[test]
    fn m2_values() {
        // 500 · 6.182557232019766 = 3091.28 → 3092.
        assert_eq!(m2_rule(500, 0.1, 0.1, 0.05, 0.8).unwrap(), 3092);
        assert_eq!(m2_rule(500, 0.1, 0.0, 0.05, 0.8), Err(Error::ZeroEffect));
        // Φ^{-1}(γ) = 1 and Φ^{-1}(1-α) = 0 give S² = 1.
        let gamma = crate::linalg::normal_cdf(1.0);
        assert_eq!(m2_rule(321, 0.7, 0.7, 0.5, gamma).unwrap(), 321);
    }

    #[test]
    fn m3_values() {
        let m = m3_rule(247_199, 0.05, 0.8, 5.0).unwrap();
        assert!((m as f64 - 61_132.0).abs() <= 0.001 * 61_132.0);
        let s = s_factor(0.05, 0.8).unwrap();
        assert_eq!(m3_rule(1000, 0.05, 0.8, s).unwrap(), 1000);
        assert!(m3_rule(1000, 0.05, 0.8, 0.0).is_err());
    }
}
