//! Command-line front end: ingest CSV data, sketch, fit, simulate, verify,
//! audit and size.
//!
//! Every subcommand reads an optional flat config file (`--config`) and
//! then applies its flags on top. Outputs carry the master seed, the crate
//! version and the SHA-256 of the resolved settings.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, IngestError};
pub use ingest::{ingest_csv, ingest_reader, write_bundle_csv, ColumnMapping, NamedBundle};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "sketchreg", version, about = "Sketched least squares and 2SLS with valid inference")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed of all random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (CSV for reports and sketches, JSON for fits).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated regressor columns; default all remaining columns.
    #[arg(long)]
    pub regressors: Option<String>,
    /// Comma-separated instrument columns.
    #[arg(long)]
    pub instruments: Option<String>,
    /// Prepend an intercept to regressors and instruments.
    #[arg(long)]
    pub intercept: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SketchArgs {
    /// bernoulli, uniform, leverage, countsketch, srht, srft, gaussian or none.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the sketched data set as CSV.
    Sketch {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sketch: SketchArgs,
    },
    /// Fit OLS or 2SLS on full or sketched data.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sketch: SketchArgs,
        /// ols or tsls; defaults to tsls when instruments are given.
        #[arg(long)]
        estimator: Option<String>,
        /// homo, robust or both.
        #[arg(long)]
        cov: Option<String>,
    },
    /// Size and power of sketched tests on a simulated design.
    Simulate {
        /// exogenous, first-stage or tsls.
        #[arg(long)]
        design: Option<String>,
        #[arg(long)]
        hetero: bool,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated schemes.
        #[arg(long)]
        schemes: Option<String>,
        /// Alternative value of the tested coefficient.
        #[arg(long)]
        alt: Option<f64>,
    },
    /// Monte Carlo checks of sketch moments; exits 4 if a hard row fails.
    Verify {
        /// rp-conditions, mse, hall or normality.
        #[arg(long)]
        what: Option<String>,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// gaussian-indep, gaussian-equal or product.
        #[arg(long)]
        uv: Option<String>,
        #[arg(long)]
        hetero: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Per-plan embedding errors and the worst-case 2SLS bound.
    Audit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sketch: SketchArgs,
        #[arg(long)]
        plans: Option<usize>,
        /// Size of the built-in fixture when no data file is given.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Sketch-size rules.
    Size {
        /// m1, m2 or m3.
        #[arg(long)]
        rule: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long = "c-m")]
        c_m: Option<f64>,
        /// log-q or q-squared.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        m1: Option<usize>,
        /// Standard error of the tested contrast at the pilot size m1.
        #[arg(long)]
        se: Option<f64>,
        #[arg(long)]
        effect: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sketch { .. } => "sketch",
            Command::Fit { .. } => "fit",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
            Command::Audit { .. } => "audit",
            Command::Size { .. } => "size",
        }
    }
}

fn merge_data(cfg: &mut RunConfig, d: &DataArgs) {
    cfg.set_opt("data", d.data.as_ref().map(|p| p.display()));
    cfg.set_opt("response", d.response.as_ref());
    cfg.set_opt("regressors", d.regressors.as_ref());
    cfg.set_opt("instruments", d.instruments.as_ref());
    cfg.set_flag("intercept", d.intercept);
}

fn merge_sketch(cfg: &mut RunConfig, s: &SketchArgs) {
    cfg.set_opt("scheme", s.scheme.as_ref());
    cfg.set_opt("m", s.m);
}

/// Resolves the config file and the flags into one set of settings.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.set_opt("seed", cli.common.seed);
    cfg.set_opt("out", cli.common.out.as_ref().map(|p| p.display()));
    match &cli.command {
        Command::Sketch { data, sketch } => {
            merge_data(&mut cfg, data);
            merge_sketch(&mut cfg, sketch);
        }
        Command::Fit { data, sketch, estimator, cov } => {
            merge_data(&mut cfg, data);
            merge_sketch(&mut cfg, sketch);
            cfg.set_opt("estimator", estimator.as_ref());
            cfg.set_opt("cov", cov.as_ref());
        }
        Command::Simulate { design, hetero, n, p, q, m, reps, schemes, alt } => {
            cfg.set_opt("design", design.as_ref());
            cfg.set_flag("hetero", *hetero);
            cfg.set_opt("n", *n);
            cfg.set_opt("p", *p);
            cfg.set_opt("q", *q);
            cfg.set_opt("m", *m);
            cfg.set_opt("reps", *reps);
            cfg.set_opt("schemes", schemes.as_ref());
            cfg.set_opt("alt", *alt);
        }
        Command::Verify { what, scheme, n, m, reps, uv, hetero, json } => {
            cfg.set_opt("what", what.as_ref());
            cfg.set_opt("scheme", scheme.as_ref());
            cfg.set_opt("n", *n);
            cfg.set_opt("m", *m);
            cfg.set_opt("reps", *reps);
            cfg.set_opt("uv", uv.as_ref());
            cfg.set_flag("hetero", *hetero);
            cfg.set_opt("json", json.as_ref().map(|p| p.display()));
        }
        Command::Audit { data, sketch, plans, n } => {
            merge_data(&mut cfg, data);
            merge_sketch(&mut cfg, sketch);
            cfg.set_opt("plans", *plans);
            cfg.set_opt("n", *n);
        }
        Command::Size { rule, n, q, c_m, variant, alpha, gamma, tau, m1, se, effect } => {
            cfg.set_opt("rule", rule.as_ref());
            cfg.set_opt("n", *n);
            cfg.set_opt("q", *q);
            cfg.set_opt("c-m", *c_m);
            cfg.set_opt("variant", variant.as_ref());
            cfg.set_opt("alpha", *alpha);
            cfg.set_opt("gamma", *gamma);
            cfg.set_opt("tau", *tau);
            cfg.set_opt("m1", *m1);
            cfg.set_opt("se", *se);
            cfg.set_opt("effect", *effect);
        }
    }
    Ok(cfg)
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    1
                }
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command on a pool of `--threads` workers.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(CliError::config("threads", "must be at least 1"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| commands::dispatch(cli.command.name(), &cfg, &mut buf));
    stdout.write_all(&buf).map_err(|e| CliError::Data(e.to_string()))?;
    result
}
