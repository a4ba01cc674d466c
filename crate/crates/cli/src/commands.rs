//! Subcommand implementations over a resolved [`RunConfig`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use sketchreg::embed::{audit_fixture, audit_plans, AuditOutcome, AuditSummary};
use sketchreg::estimators::{fit, fit_sketched, CovKind, DataBundle, EstimatorKind, FitResult};
use sketchreg::inference::{m1_rule, m2_rule, m3_rule, M1Variant};
use sketchreg::linalg::RngStream;
use sketchreg::moments::{
    check_rp_conditions, hall_ratio_diagnostic, mse_limit_check, normality_check, power_rule, MomentReport, UVDistribution,
    HALL_PAIR_BUDGET,
};
use sketchreg::montecarlo::{plan_for, run_size_power, DgpSpec, SimTable, SimTest};
use sketchreg::sketch::{sketch_data, SketchKind};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::ingest::{ingest_csv, write_bundle_csv, ColumnMapping, NamedBundle};
use crate::VERSION;

pub const DEFAULT_SEED: u64 = 1;

pub fn dispatch(command: &str, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        "sketch" => cmd_sketch(cfg, stdout),
        "fit" => cmd_fit(cfg, stdout),
        "simulate" => cmd_simulate(cfg, stdout),
        "verify" => cmd_verify(cfg, stdout),
        "audit" => cmd_audit(cfg, stdout),
        "size" => cmd_size(cfg, stdout),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

pub fn master_seed(cfg: &RunConfig) -> Result<u64, CliError> {
    match cfg.get::<u64>("seed")? {
        Some(s) => Ok(s),
        None => cfg.get_or("master-seed", DEFAULT_SEED),
    }
}

/// `# key=value` lines that open every CSV output.
pub fn provenance_lines(cfg: &RunConfig) -> Result<String, CliError> {
    Ok(format!("# master_seed={}\n# version={VERSION}\n# config_sha256={}\n", master_seed(cfg)?, cfg.hash()))
}

fn out_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.raw("out").map(PathBuf::from)
}

/// Writes `body` to `--out` when given, else to stdout.
fn emit(cfg: &RunConfig, stdout: &mut dyn Write, body: &[u8]) -> Result<(), CliError> {
    match out_path(cfg) {
        Some(path) => write_file(&path, body),
        None => stdout.write_all(body).map_err(|e| CliError::Data(e.to_string())),
    }
}

fn write_file(path: &PathBuf, body: &[u8]) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(body).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn say(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Data(e.to_string()))
}

fn parse_scheme(cfg: &RunConfig) -> Result<Option<SketchKind>, CliError> {
    let raw = cfg.raw("scheme").ok_or_else(|| CliError::config("scheme", "missing required value"))?;
    if raw.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|e: sketchreg::Error| CliError::config("scheme", e.to_string()))
}

fn scheme_or(cfg: &RunConfig, default: SketchKind) -> Result<SketchKind, CliError> {
    match cfg.raw("scheme") {
        None => Ok(default),
        Some(_) => parse_scheme(cfg)?.ok_or_else(|| CliError::config("scheme", "`none` is not valid here")),
    }
}

fn mapping(cfg: &RunConfig) -> Result<ColumnMapping, CliError> {
    Ok(ColumnMapping {
        response: cfg.require("response")?,
        regressors: cfg.list("regressors"),
        instruments: cfg.list("instruments"),
        intercept: cfg.bool_or("intercept", false)?,
    })
}

fn load_data(cfg: &RunConfig) -> Result<NamedBundle, CliError> {
    let path: PathBuf = cfg.require("data")?;
    ingest_csv(&path, &mapping(cfg)?)
}

fn plan_stream(cfg: &RunConfig) -> Result<RngStream, CliError> {
    Ok(RngStream::new(master_seed(cfg)?, 0))
}

fn sketch_bundle(cfg: &RunConfig, bundle: &NamedBundle) -> Result<NamedBundle, CliError> {
    let Some(kind) = parse_scheme(cfg)? else {
        return Ok(bundle.clone());
    };
    let m: usize = cfg.require("m")?;
    let plan = plan_for(kind, m, &bundle.data, &plan_stream(cfg)?)?;
    let data = sketch_data(&plan, &bundle.data)?.into_bundle()?;
    Ok(NamedBundle { data, ..bundle.clone() })
}

fn cmd_sketch(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let bundle = load_data(cfg)?;
    let sketched = sketch_bundle(cfg, &bundle)?;
    let mut body = provenance_lines(cfg)?.into_bytes();
    write_bundle_csv(&mut body, &sketched, false)?;
    emit(cfg, stdout, &body)?;
    if out_path(cfg).is_some() {
        say(stdout, &format!("sketched {} rows into {} rows\n", bundle.data.n(), sketched.data.n()))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FitOutput<'a> {
    names: &'a [String],
    beta: &'a [f64],
    se0: Option<Vec<f64>>,
    se1: Option<Vec<f64>>,
    m_used: usize,
    scheme: String,
    estimator: EstimatorKind,
    seed: u64,
    version: &'static str,
    config_sha256: String,
}

fn cov_selection(cfg: &RunConfig) -> Result<(bool, bool), CliError> {
    match cfg.raw("cov").unwrap_or("both").to_ascii_lowercase().as_str() {
        "homo" => Ok((true, false)),
        "robust" => Ok((false, true)),
        "both" => Ok((true, true)),
        other => Err(CliError::config("cov", format!("expected homo, robust or both, found `{other}`"))),
    }
}

fn estimator_kind(cfg: &RunConfig, data: &DataBundle) -> Result<EstimatorKind, CliError> {
    match cfg.raw("estimator").map(str::to_ascii_lowercase).as_deref() {
        None if data.z.is_some() => Ok(EstimatorKind::Tsls),
        None | Some("ols") => Ok(EstimatorKind::Ols),
        Some("tsls") | Some("2sls") => Ok(EstimatorKind::Tsls),
        Some(other) => Err(CliError::config("estimator", format!("expected ols or tsls, found `{other}`"))),
    }
}

fn cmd_fit(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let bundle = load_data(cfg)?;
    let kind = estimator_kind(cfg, &bundle.data)?;
    let (homo, robust) = cov_selection(cfg)?;
    let scheme = parse_scheme(cfg)?;
    let result: FitResult = match scheme {
        None => fit(&bundle.data, kind)?,
        Some(k) => {
            let m: usize = cfg.require("m")?;
            let plan = plan_for(k, m, &bundle.data, &plan_stream(cfg)?)?;
            fit_sketched(&bundle.data, &plan, kind)?
        }
    };
    let se0 = result.std_errors(CovKind::Homo);
    let se1 = result.std_errors(CovKind::Robust);
    let out = FitOutput {
        names: &bundle.regressors,
        beta: &result.beta,
        se0: homo.then(|| se0.clone()),
        se1: robust.then(|| se1.clone()),
        m_used: result.sample_size_used,
        scheme: scheme.map_or_else(|| "none".to_string(), |k| k.name().to_string()),
        estimator: kind,
        seed: master_seed(cfg)?,
        version: VERSION,
        config_sha256: cfg.hash(),
    };
    let mut table = format!("{:<16} {:>14} {:>14} {:>14}\n", "", "estimate", "s.e.0", "s.e.1");
    for (j, name) in bundle.regressors.iter().enumerate() {
        let fmt = |on: bool, v: f64| if on { format!("{v:>14.6}") } else { format!("{:>14}", "-") };
        table.push_str(&format!("{:<16} {:>14.6} {} {}\n", name, result.beta[j], fmt(homo, se0[j]), fmt(robust, se1[j])));
    }
    table.push_str(&format!("rows used: {}, scheme: {}\n", out.m_used, out.scheme));
    say(stdout, &table)?;
    if let Some(path) = out_path(cfg) {
        let json = serde_json::to_string_pretty(&out).map_err(|e| CliError::Data(e.to_string()))?;
        write_file(&path, json.as_bytes())?;
    }
    Ok(())
}

const TABLE_SCHEMES: [SketchKind; 6] = [
    SketchKind::Bernoulli,
    SketchKind::UniformWithReplacement,
    SketchKind::LeverageScore,
    SketchKind::CountSketch,
    SketchKind::Srht,
    SketchKind::Srft,
];

fn sim_setup(cfg: &RunConfig) -> Result<(DgpSpec, SimTest, Vec<SketchKind>), CliError> {
    let hetero = cfg.bool_or("hetero", false)?;
    let n = cfg.get_or("n", 20_000usize)?;
    let p = cfg.get_or("p", 6usize)?;
    let q = cfg.get_or("q", 21usize)?;
    let design = cfg.raw("design").unwrap_or("exogenous").to_ascii_lowercase();
    let (dgp, test, default_schemes) = match design.as_str() {
        "exogenous" | "ols" => {
            let alt = cfg.get_or("alt", if hetero { 1.4 } else { 1.1 })?;
            (DgpSpec::exogenous(n, p, hetero), SimTest::last_coefficient(p, alt), TABLE_SCHEMES.to_vec())
        }
        "first-stage" | "f" => {
            let null_zeta = cfg.get_or("null-zeta", 0.0)?;
            let alt_zeta = cfg.get_or("alt-zeta", 0.1)?;
            let dgp = DgpSpec::first_stage(n, p, q, hetero, null_zeta);
            (dgp, SimTest::FirstStageF { null_zeta, alt_zeta }, TABLE_SCHEMES.iter().copied().filter(|k| *k != SketchKind::LeverageScore).collect())
        }
        "tsls" | "2sls" => {
            let alt = cfg.get_or("alt", if hetero { 1.1 } else { 1.05 })?;
            let dgp = DgpSpec::tsls(n, p, q, hetero);
            (dgp, SimTest::last_coefficient(p, alt), TABLE_SCHEMES.iter().copied().filter(|k| *k != SketchKind::LeverageScore).collect())
        }
        other => return Err(CliError::config("design", format!("expected exogenous, first-stage or tsls, found `{other}`"))),
    };
    let listed = cfg.list("schemes");
    let schemes = if listed.is_empty() {
        default_schemes
    } else {
        listed
            .iter()
            .map(|s| s.parse::<SketchKind>().map_err(|e| CliError::config("schemes", e.to_string())))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok((dgp, test, schemes))
}

fn sim_csv(cfg: &RunConfig, table: &SimTable) -> Result<Vec<u8>, CliError> {
    let mut body = provenance_lines(cfg)?;
    body.push_str(&format!("# reps={}\n", table.reps));
    body.push_str("scheme,experiment,cov,rejections,valid_reps,failures,rate,mc_se\n");
    for r in &table.rows {
        let exp = match r.experiment {
            sketchreg::montecarlo::Experiment::Size => "size",
            sketchreg::montecarlo::Experiment::Power => "power",
        };
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.scheme,
            exp,
            r.cov.label(),
            r.rejections,
            r.valid_reps,
            r.failures,
            r.rate,
            r.mc_se
        ));
    }
    Ok(body.into_bytes())
}

fn cmd_simulate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (dgp, test, schemes) = sim_setup(cfg)?;
    let m = cfg.get_or("m", 500usize)?;
    let reps = cfg.get_or("reps", 2000usize)?;
    if reps == 0 {
        return Err(CliError::config("reps", "must be positive"));
    }
    let stream = RngStream::new(master_seed(cfg)?, 0);
    let table = run_size_power(&dgp, &schemes, m, reps, &test, &stream)?;
    say(stdout, &format!("{table}replications: {}\n", table.reps))?;
    if let Some(path) = out_path(cfg) {
        write_file(&path, &sim_csv(cfg, &table)?)?;
    }
    Ok(())
}

fn uv_law(cfg: &RunConfig) -> Result<UVDistribution, CliError> {
    match cfg.raw("uv").unwrap_or("gaussian-indep").to_ascii_lowercase().as_str() {
        "gaussian-indep" | "indep" => Ok(UVDistribution::gaussian_indep()),
        "gaussian-equal" | "equal" => Ok(UVDistribution::gaussian_equal()),
        "product" => Ok(UVDistribution::product()),
        other => Err(CliError::config("uv", format!("expected gaussian-indep, gaussian-equal or product, found `{other}`"))),
    }
}

fn report_csv(cfg: &RunConfig, report: &MomentReport) -> Result<Vec<u8>, CliError> {
    let mut body = provenance_lines(cfg)?;
    body.push_str(&format!("# check={} scheme={} n={} m={} reps={}\n", report.check, report.scheme, report.n, report.m, report.replications));
    body.push_str("name,empirical,theoretical,mc_stderr,hard,pass\n");
    for r in &report.rows {
        let theo = r.theoretical.map_or_else(String::new, |t| t.to_string());
        body.push_str(&format!("\"{}\",{},{},{},{},{}\n", r.name.replace('"', "\"\""), r.empirical, theo, r.mc_stderr, r.hard, r.pass));
    }
    Ok(body.into_bytes())
}

#[derive(Serialize)]
struct ReportJson<'a> {
    master_seed: u64,
    version: &'static str,
    config_sha256: String,
    report: &'a MomentReport,
}

fn cmd_verify(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let what = cfg.raw("what").unwrap_or("rp-conditions").to_ascii_lowercase();
    let scheme = scheme_or(cfg, SketchKind::CountSketch)?;
    let seed = master_seed(cfg)?;
    let stream = RngStream::new(seed, 0);
    let report = match what.as_str() {
        "rp-conditions" | "rp" => {
            let n = cfg.get_or("n", 256usize)?;
            let m = cfg.get_or("m", 64usize)?;
            let reps = cfg.get_or("reps", 20_000usize)?;
            check_rp_conditions(scheme, n, m, reps, &stream)?
        }
        "mse" => {
            let n = cfg.get_or("n", 10_000usize)?;
            let m = cfg.get_or("m", 200usize)?;
            let reps = cfg.get_or("reps", 5000usize)?;
            mse_limit_check(scheme, &uv_law(cfg)?, n, m, reps, &stream)?
        }
        "hall" => {
            let reps = cfg.get_or("reps", HALL_PAIR_BUDGET)?;
            hall_ratio_diagnostic(scheme, &uv_law(cfg)?, &[1000, 10_000], power_rule(0.4), reps, &stream)?
        }
        "normality" => {
            let n = cfg.get_or("n", 20_000usize)?;
            let m = cfg.get_or("m", 500usize)?;
            let reps = cfg.get_or("reps", 2000usize)?;
            let p = cfg.get_or("p", 6usize)?;
            let dgp = DgpSpec::exogenous(n, p, cfg.bool_or("hetero", false)?);
            normality_check(scheme, &dgp, n, m, reps, &stream)?
        }
        other => return Err(CliError::config("what", format!("expected rp-conditions, mse, hall or normality, found `{other}`"))),
    };
    say(stdout, &report.to_string())?;
    if let Some(path) = out_path(cfg) {
        write_file(&path, &report_csv(cfg, &report)?)?;
    }
    if let Some(path) = cfg.raw("json").map(PathBuf::from) {
        let doc = ReportJson { master_seed: seed, version: VERSION, config_sha256: cfg.hash(), report: &report };
        let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Data(e.to_string()))?;
        write_file(&path, json.as_bytes())?;
    }
    verification_outcome(&report)
}

/// `Verification` error naming every failed hard row.
pub fn verification_outcome(report: &MomentReport) -> Result<(), CliError> {
    let failures = report.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        let names: Vec<&str> = failures.iter().map(|r| r.name.as_str()).collect();
        Err(CliError::Verification(names.join(", ")))
    }
}

fn cmd_audit(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed = master_seed(cfg)?;
    let data = match cfg.raw("data") {
        Some(_) => load_data(cfg)?.data,
        None => audit_fixture(cfg.get_or("n", 1024usize)?, &RngStream::new(seed, 0))?,
    };
    let scheme = scheme_or(cfg, SketchKind::CountSketch)?;
    let m = cfg.get_or("m", 512usize)?;
    let plans = cfg.get_or("plans", 200usize)?;
    let rows = audit_plans(&data, scheme, m, plans, &RngStream::new(seed, 1))?;
    let s = AuditSummary::from_rows(scheme, &rows);
    say(
        stdout,
        &format!(
            "audit [{}] n = {}, m = {}: {} plans, {} qualifying, {} violations, max actual/bound {:.4}\n",
            scheme,
            data.n(),
            m,
            s.plans,
            s.qualifying,
            s.violations,
            s.max_ratio
        ),
    )?;
    if let Some(path) = out_path(cfg) {
        let mut body = provenance_lines(cfg)?;
        body.push_str("plan,seed,stream,eps1,eps2,eps3,bound,actual,holds\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &rows {
            let holds = match r.outcome {
                AuditOutcome::Holds => "true",
                AuditOutcome::Violated => "false",
                AuditOutcome::Untestable => "untestable",
            };
            body.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.plan_index,
                seed,
                r.plan_stream,
                r.errors.eps1,
                r.errors.eps2,
                r.errors.eps3,
                opt(r.bound),
                opt(r.actual),
                holds
            ));
        }
        write_file(&path, body.as_bytes())?;
    }
    Ok(())
}

fn cmd_size(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let alpha = cfg.get_or("alpha", 0.05)?;
    let gamma = cfg.get_or("gamma", 0.8)?;
    let m = match cfg.raw("rule").unwrap_or("m3").to_ascii_lowercase().as_str() {
        "m1" => {
            let variant = match cfg.raw("variant").unwrap_or("log-q") {
                "log-q" | "logq" => M1Variant::LogQ,
                "q-squared" | "q2" => M1Variant::QSquared,
                other => return Err(CliError::config("variant", format!("expected log-q or q-squared, found `{other}`"))),
            };
            m1_rule(cfg.require("q")?, cfg.get_or("c-m", 1.0)?, variant)?
        }
        "m2" => m2_rule(cfg.require("m1")?, cfg.require("se")?, cfg.require("effect")?, alpha, gamma)?,
        "m3" => m3_rule(cfg.require("n")?, alpha, gamma, cfg.require("tau")?)?,
        other => return Err(CliError::config("rule", format!("expected m1, m2 or m3, found `{other}`"))),
    };
    say(stdout, &format!("{m}\n"))?;
    if let Some(path) = out_path(cfg) {
        let body = format!("{}m\n{m}\n", provenance_lines(cfg)?);
        write_file(&path, body.as_bytes())?;
    }
    Ok(())
}
