//! Monte Carlo checks of sketch moments: the RP moment conditions, MSE of
//! sketched inner products, the Hall U-statistic condition and the
//! normality of sketched OLS.
//!
//! Every check returns a [`MomentReport`] whose rows compare an empirical
//! mean with its theoretical value. Replications are split into 20
//! contiguous groups and the standard error is that of the group means; a
//! row passes when the gap is within three standard errors.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::fit_ols;
use crate::linalg::{normal_cdf, normal_quantile, Matrix, RngStream};
use crate::montecarlo::{gen_exogenous, plan_for, Design, DgpSpec};
use crate::sketch::{plan_sketch, SketchKind, SketchPlan, SketchScheme};

/// Number of batch groups behind every Monte Carlo standard error.
pub const BATCH_GROUPS: usize = 20;
/// Index tuples drawn per replication in [`check_rp_conditions`].
pub const RP_TUPLES_PER_REP: usize = 256;
/// Pair budget per sample size in [`hall_ratio_diagnostic`].
pub const HALL_PAIR_BUDGET: usize = 100_000;

/// Population moments of a pair `(U, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UVMoments {
    pub eu2: f64,
    pub ev2: f64,
    pub euv: f64,
    pub eu2v2: f64,
    pub var_uv: f64,
}

impl UVMoments {
    /// MSE limit under random sampling: `Var(UV)`.
    pub fn rs_limit(&self) -> f64 {
        self.var_uv
    }

    /// MSE limit under Bernoulli sampling: `E(U²V²)`.
    pub fn bs_limit(&self) -> f64 {
        self.eu2v2
    }

    /// MSE limit under random projection: `E(U²)E(V²) + E(UV)²`.
    pub fn rp_limit(&self) -> f64 {
        self.eu2 * self.ev2 + self.euv * self.euv
    }

    fn validate(&self) -> Result<()> {
        let all = [self.eu2, self.ev2, self.euv, self.eu2v2, self.var_uv];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        for (what, v) in [("E(U^2)", self.eu2), ("E(V^2)", self.ev2), ("E(U^2V^2)", self.eu2v2), ("Var(UV)", self.var_uv)] {
            if v < 0.0 {
                return Err(Error::OutOfDomain { what, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UVKind {
    GaussianIndep,
    GaussianEqual,
    Product,
    Custom,
}

type Sampler = Arc<dyn Fn(&mut RngStream) -> (f64, f64) + Send + Sync>;

/// Distribution of the i.i.d. pairs `(U_i, V_i)`.
#[derive(Clone)]
pub struct UVDistribution {
    kind: UVKind,
    moments: UVMoments,
    sampler: Option<Sampler>,
}

impl fmt::Debug for UVDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UVDistribution").field("kind", &self.kind).field("moments", &self.moments).finish()
    }
}

impl UVDistribution {
    /// `U, V` independent standard normals.
    pub fn gaussian_indep() -> Self {
        let moments = UVMoments { eu2: 1.0, ev2: 1.0, euv: 0.0, eu2v2: 1.0, var_uv: 1.0 };
        UVDistribution { kind: UVKind::GaussianIndep, moments, sampler: None }
    }

    /// `U = V` standard normal.
    pub fn gaussian_equal() -> Self {
        let moments = UVMoments { eu2: 1.0, ev2: 1.0, euv: 1.0, eu2v2: 3.0, var_uv: 2.0 };
        UVDistribution { kind: UVKind::GaussianEqual, moments, sampler: None }
    }

    /// `U ~ N(0,1)` and `V = U·W` with independent `W ~ N(1,1)`.
    pub fn product() -> Self {
        let moments = UVMoments { eu2: 1.0, ev2: 2.0, euv: 1.0, eu2v2: 6.0, var_uv: 5.0 };
        UVDistribution { kind: UVKind::Product, moments, sampler: None }
    }

    /// User-supplied sampler with analytic or pre-estimated moments.
    pub fn custom(sampler: impl Fn(&mut RngStream) -> (f64, f64) + Send + Sync + 'static, moments: UVMoments) -> Result<Self> {
        moments.validate()?;
        Ok(UVDistribution { kind: UVKind::Custom, moments, sampler: Some(Arc::new(sampler)) })
    }

    pub fn kind(&self) -> UVKind {
        self.kind
    }

    pub fn moments(&self) -> &UVMoments {
        &self.moments
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            UVKind::GaussianIndep => "gaussian_indep",
            UVKind::GaussianEqual => "gaussian_equal",
            UVKind::Product => "product",
            UVKind::Custom => "custom",
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> (f64, f64) {
        match self.kind {
            UVKind::GaussianIndep => (rng.normal(), rng.normal()),
            UVKind::GaussianEqual => {
                let u = rng.normal();
                (u, u)
            }
            UVKind::Product => {
                let u = rng.normal();
                let w = 1.0 + rng.normal();
                (u, u * w)
            }
            UVKind::Custom => (self.sampler.as_ref().expect("custom sampler"))(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub empirical: f64,
    /// `None` for purely descriptive rows.
    pub theoretical: Option<f64>,
    pub mc_stderr: f64,
    pub pass: bool,
    /// Whether the row counts towards [`MomentReport::all_hard_pass`].
    pub hard: bool,
}

impl ReportRow {
    fn compared(name: impl Into<String>, empirical: f64, theoretical: f64, mc_stderr: f64, hard: bool) -> Self {
        let slack = 3.0 * mc_stderr + 1e-12 * theoretical.abs().max(1.0);
        let pass = (empirical - theoretical).abs() <= slack;
        ReportRow { name: name.into(), empirical, theoretical: Some(theoretical), mc_stderr, pass, hard }
    }

    fn descriptive(name: impl Into<String>, empirical: f64, mc_stderr: f64) -> Self {
        ReportRow { name: name.into(), empirical, theoretical: None, mc_stderr, pass: true, hard: false }
    }

    fn flag(name: impl Into<String>, holds: bool) -> Self {
        let v = if holds { 1.0 } else { 0.0 };
        ReportRow { name: name.into(), empirical: v, theoretical: Some(1.0), mc_stderr: 0.0, pass: holds, hard: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Which check produced the report.
    pub check: String,
    pub scheme: SketchKind,
    pub n: usize,
    pub m: usize,
    pub replications: usize,
    pub rows: Vec<ReportRow>,
    pub metadata: BTreeMap<String, String>,
}

impl MomentReport {
    fn new(check: &str, scheme: SketchKind, n: usize, m: usize, replications: usize, seed: u64) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert("seed".to_string(), seed.to_string());
        metadata.insert("batch_groups".to_string(), BATCH_GROUPS.to_string());
        MomentReport { check: check.to_string(), scheme, n, m, replications, rows: Vec::new(), metadata }
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn all_hard_pass(&self) -> bool {
        self.rows.iter().filter(|r| r.hard).all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.hard && !r.pass).collect()
    }
}

impl fmt::Display for MomentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} [{}] n = {}, m = {}, reps = {}", self.check, self.scheme, self.n, self.m, self.replications)?;
        for r in &self.rows {
            let theo = r.theoretical.map_or_else(|| "-".to_string(), |t| format!("{t:.6}"));
            let status = match (r.hard, r.pass) {
                (false, _) => "info",
                (true, true) => "pass",
                (true, false) => "FAIL",
            };
            writeln!(f, "  {:<40} {:>12.6} {:>12} {:>10.2e} {}", r.name, r.empirical, theo, r.mc_stderr, status)?;
        }
        Ok(())
    }
}

/// Mean and batch-means standard error of per-replication values.
pub fn batch_mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let g = BATCH_GROUPS.min(n);
    if g < 2 {
        return (mean, f64::NAN);
    }
    let groups: Vec<f64> = (0..g)
        .map(|j| {
            let (lo, hi) = (j * n / g, (j + 1) * n / g);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let gbar = groups.iter().sum::<f64>() / g as f64;
    let var = groups.iter().map(|v| (v - gbar).powi(2)).sum::<f64>() / (g - 1) as f64;
    (mean, (var / g as f64).sqrt())
}

fn column(per_rep: &[Vec<f64>], j: usize) -> Vec<f64> {
    per_rep.iter().map(|r| r[j]).collect()
}

fn slot(kind: SketchKind) -> u64 {
    SketchKind::ALL.iter().position(|k| *k == kind).expect("known scheme") as u64
}

fn draw_distinct(rng: &mut RngStream, n: usize, avoid: impl Fn(usize) -> bool) -> usize {
    loop {
        let j = rng.below(n);
        if !avoid(j) {
            return j;
        }
    }
}

/// Index `i` whose Fourier column has the moments of a generic frequency.
fn srft_generic(i: usize, n: usize) -> bool {
    (4 * i) % n != 0
}

/// Pair `(i, j)` with `2(i ± j) ≢ 0 (mod n)`.
fn srft_generic_pair(i: usize, j: usize, n: usize) -> bool {
    (2 * (i + j)) % n != 0 && (2 * (i + n - j)) % n != 0
}

/// Estimates the moment conditions of a random projection from the
/// realized entries of `Π` at random index tuples.
///
/// Rows are scaled so the targets are `O(1)`: `√m E[Π_ki]`, `m E[Π²_ki]`,
/// `m E[Π⁴_ki]`, `m E[Π_ki Π_kj]`, `m² E[Π²_ki Π²_kj]` and
/// `m² E[Π_ki Π_kj Π_ℓp Π_ℓq]` with `k ≠ ℓ`, `i ≠ j`, `p ≠ q`. The fourth
/// moment row is compared with the exact value of the scheme. SRFT indices
/// avoid the self-conjugate frequencies and its rows are informational.
pub fn check_rp_conditions(scheme: SketchKind, n: usize, m: usize, reps: usize, stream: &RngStream) -> Result<MomentReport> {
    if !scheme.is_random_projection() {
        return Err(Error::UnsupportedScheme(scheme));
    }
    if m < 2 || n < 8 {
        return Err(Error::InvalidSpec("moment conditions need m >= 2 and n >= 8".into()));
    }
    let srft = scheme == SketchKind::Srft;
    let per_rep: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let rep = stream.derive(r as u64);
            let plan = plan_sketch(SketchScheme::new(scheme, m), n, &rep.derive(0), None)?;
            let pi = plan.to_dense();
            let mut rng = rep.derive(1);
            let mut acc = [0.0; 7];
            for _ in 0..RP_TUPLES_PER_REP {
                let k = rng.below(m);
                let l = draw_distinct(&mut rng, m, |x| x == k);
                let i = if srft { draw_distinct(&mut rng, n, |x| !srft_generic(x, n)) } else { rng.below(n) };
                let j = draw_distinct(&mut rng, n, |x| x == i || (srft && (!srft_generic(x, n) || !srft_generic_pair(i, x, n))));
                let p = rng.below(n);
                let q = draw_distinct(&mut rng, n, |x| x == p);
                let (a, b) = (pi[(k, i)], pi[(k, j)]);
                acc[0] += a;
                acc[1] += a * a;
                acc[2] += a.powi(4);
                acc[3] += a * b;
                acc[4] += a * a * b * b;
                acc[5] += a * b * pi[(l, p)] * pi[(l, q)];
                acc[6] += if a * b == 0.0 { 1.0 } else { 0.0 };
            }
            let t = RP_TUPLES_PER_REP as f64;
            let mf = m as f64;
            let scale = [mf.sqrt(), mf, mf, mf, mf * mf, mf * mf, 1.0];
            Ok(acc.iter().zip(scale).map(|(v, s)| v * s / t).collect())
        })
        .collect::<Result<_>>()?;

    let mf = m as f64;
    let fourth = match scheme {
        SketchKind::Gaussian => 3.0 / mf,
        SketchKind::CountSketch => 1.0,
        SketchKind::Srht => 1.0 / mf,
        _ => 1.5 / mf,
    };
    let hard = !srft;
    let mut report = MomentReport::new("rp_conditions", scheme, n, m, reps, stream.master_seed());
    let targets = [
        ("sqrt(m)*E[Pi_ki]", 0.0),
        ("m*E[Pi_ki^2]", 1.0),
        ("m*E[Pi_ki^4]", fourth),
        ("m*E[Pi_ki*Pi_kj]", 0.0),
        ("m^2*E[Pi_ki^2*Pi_kj^2]", 1.0),
        ("m^2*E[Pi_ki*Pi_kj*Pi_lp*Pi_lq]", 0.0),
    ];
    for (j, (name, target)) in targets.into_iter().enumerate() {
        let (mean, se) = batch_mean_se(&column(&per_rep, j));
        report.rows.push(ReportRow::compared(name, mean, target, se, hard));
    }
    if scheme == SketchKind::CountSketch {
        let (mean, se) = batch_mean_se(&column(&per_rep, 6));
        // Π_ki Π_kj ≠ 0 only when columns i and j both hash to row k.
        let target = 1.0 - 1.0 / (mf * mf);
        report.rows.push(ReportRow::compared("zero-fraction Pi_ki*Pi_kj", mean, target, se, true));
    }
    report.metadata.insert("tuples_per_rep".into(), RP_TUPLES_PER_REP.to_string());
    if srft {
        report.metadata.insert("convention".into(), "convention-dependent: real part of the unitary DFT, no permutation, generic frequencies only".into());
    }
    Ok(report)
}

/// Exact variance of `UᵀΠᵀΠV/n` under sampling with replacement at
/// probabilities `p` and the unweighted scale `√(n/m)`:
/// `{1/m − 1/n + (1 − 1/m) Σ p_i²} Var(UV)`.
///
/// ```
/// use sketchreg::moments::exact_rs_variance;
/// let p = vec![0.01; 100];
/// assert!((exact_rs_variance(&p, 10, 100, 2.0).unwrap() - 0.198).abs() < 1e-15);
/// ```
pub fn exact_rs_variance(p_vec: &[f64], m: usize, n: usize, var_uv: f64) -> Result<f64> {
    if p_vec.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p_vec.len() });
    }
    if m == 0 {
        return Err(Error::InvalidSpec("m must be positive".into()));
    }
    if p_vec.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::BadProbabilities("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = p_vec.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadProbabilities(format!("probabilities sum to {total}")));
    }
    let (mf, nf) = (m as f64, n as f64);
    let sum_sq: f64 = p_vec.iter().map(|p| p * p).sum();
    Ok((1.0 / mf - 1.0 / nf + (1.0 - 1.0 / mf) * sum_sq) * var_uv)
}

/// Exact `MSE[√m (UᵀΠᵀΠV − UᵀV)/n]` at finite `(n, m)`; `None` where only
/// the limit is known.
pub fn exact_mse(scheme: SketchKind, uv: &UVMoments, n: usize, m: usize) -> Option<f64> {
    let (nf, mf) = (n as f64, m as f64);
    let rp = (1.0 - 1.0 / nf) * uv.rp_limit();
    match scheme {
        SketchKind::UniformWithReplacement => Some((1.0 - 1.0 / nf) * uv.var_uv),
        SketchKind::Bernoulli => Some((1.0 - mf / nf) * uv.eu2v2),
        SketchKind::CountSketch | SketchKind::Srht => Some(rp),
        SketchKind::Gaussian => Some(2.0 * uv.eu2v2 / nf + rp),
        SketchKind::Srft | SketchKind::LeverageScore => None,
    }
}

/// The asymptotic MSE of the scheme's class.
pub fn mse_limit(scheme: SketchKind, uv: &UVMoments) -> Option<f64> {
    match scheme {
        SketchKind::UniformWithReplacement => Some(uv.rs_limit()),
        SketchKind::Bernoulli => Some(uv.bs_limit()),
        SketchKind::LeverageScore => None,
        _ => Some(uv.rp_limit()),
    }
}

/// Monte Carlo MSE of `√m (UᵀΠᵀΠV − UᵀV)/n` for one distribution.
///
/// The gated row compares with the exact finite-sample value; the limit of
/// the scheme's class is reported alongside.
pub fn mse_limit_check(scheme: SketchKind, uv: &UVDistribution, n: usize, m: usize, reps: usize, stream: &RngStream) -> Result<MomentReport> {
    Ok(mse_limit_check_many(scheme, std::slice::from_ref(uv), n, m, reps, stream)?.remove(0))
}

/// [`mse_limit_check`] for several distributions sharing one plan per
/// replication.
pub fn mse_limit_check_many(
    scheme: SketchKind,
    uvs: &[UVDistribution],
    n: usize,
    m: usize,
    reps: usize,
    stream: &RngStream,
) -> Result<Vec<MomentReport>> {
    if scheme == SketchKind::LeverageScore {
        return Err(Error::UnsupportedScheme(scheme));
    }
    if m == 0 || 10 * m > n {
        return Err(Error::BadRatio { m, n });
    }
    let d = uvs.len();
    let sqrt_m = (m as f64).sqrt();
    let per_rep: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let rep = stream.derive(r as u64);
            let mut data = Matrix::zeros(n, 2 * d);
            for (t, uv) in uvs.iter().enumerate() {
                let mut g = rep.derive(0).derive(t as u64);
                for i in 0..n {
                    let (u, v) = uv.sample(&mut g);
                    let row = data.row_mut(i);
                    row[2 * t] = u;
                    row[2 * t + 1] = v;
                }
            }
            let plan = plan_sketch(SketchScheme::new(scheme, m), n, &rep.derive(1 + slot(scheme)), None)?;
            let sk = plan.apply(&data)?;
            Ok((0..d)
                .map(|t| {
                    let full: f64 = (0..n).map(|i| data[(i, 2 * t)] * data[(i, 2 * t + 1)]).sum();
                    let sketched: f64 = (0..sk.nrows()).map(|k| sk[(k, 2 * t)] * sk[(k, 2 * t + 1)]).sum();
                    let err = sqrt_m * (sketched - full) / n as f64;
                    err * err
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(d);
    for (t, uv) in uvs.iter().enumerate() {
        let (mean, se) = batch_mean_se(&column(&per_rep, t));
        let mom = uv.moments();
        let mut report = MomentReport::new("mse_limit", scheme, n, m, reps, stream.master_seed());
        report.metadata.insert("uv".into(), uv.name().into());
        match exact_mse(scheme, mom, n, m) {
            Some(exact) => report.rows.push(ReportRow::compared("mse (finite-sample exact)", mean, exact, se, true)),
            None => report.rows.push(ReportRow::descriptive("mse", mean, se)),
        }
        if let Some(limit) = mse_limit(scheme, mom) {
            report.rows.push(ReportRow::compared("mse (asymptotic limit)", mean, limit, se, false));
        }
        if scheme == SketchKind::UniformWithReplacement {
            let p = vec![1.0 / n as f64; n];
            let v = m as f64 * exact_rs_variance(&p, m, n, mom.var_uv)?;
            report.rows.push(ReportRow::compared("m*exact_rs_variance", mean, v, se, true));
        }
        if scheme == SketchKind::Srft {
            report.metadata.insert("convention".into(), "convention-dependent".into());
        }
        out.push(report);
    }
    Ok(out)
}

/// `m(n) = round(n^exponent)`, at least 1.
pub fn power_rule(exponent: f64) -> impl Fn(usize) -> usize {
    move |n| ((n as f64).powf(exponent).round() as usize).max(1)
}

/// Monte Carlo estimates of the moments in Hall's sufficient condition
/// for the degenerate U-statistic `T_n2` with i.i.d. columns of `Π`.
///
/// For each `n` in the ladder, `reps` independent pairs `(W₁, W₂)` give
/// `H = (u₁v₂ + u₂v₁)⟨π₁, π₂⟩` and its projection
/// `G = m⁻¹{E(U²)v₁v₂ + E(V²)u₁u₂ + E(UV)(u₁v₂ + u₂v₁)}⟨π₁, π₂⟩`.
/// The ratio `(E[G²] + E[H⁴]/n) / E[H²]²` should fall along the ladder.
pub fn hall_ratio_diagnostic(
    scheme: SketchKind,
    uv: &UVDistribution,
    n_ladder: &[usize],
    m_of_n: impl Fn(usize) -> usize,
    reps: usize,
    stream: &RngStream,
) -> Result<MomentReport> {
    if !matches!(scheme, SketchKind::Gaussian | SketchKind::CountSketch) {
        return Err(Error::UnsupportedScheme(scheme));
    }
    if n_ladder.is_empty() || reps < BATCH_GROUPS {
        return Err(Error::InvalidSpec("hall diagnostic needs a ladder and at least 20 pairs".into()));
    }
    let mom = *uv.moments();
    let last_n = *n_ladder.last().expect("non-empty ladder");
    let mut report = MomentReport::new("hall_ratio", scheme, last_n, m_of_n(last_n), reps, stream.master_seed());
    report.metadata.insert("uv".into(), uv.name().into());
    let mut ratios = Vec::with_capacity(n_ladder.len());
    for (step, &n) in n_ladder.iter().enumerate() {
        let m = m_of_n(n);
        if m == 0 {
            return Err(Error::InvalidSpec("m(n) must be positive".into()));
        }
        let mf = m as f64;
        let per_batch: Vec<[f64; 3]> = (0..BATCH_GROUPS)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream.derive(step as u64).derive(b as u64);
                let count = (b + 1) * reps / BATCH_GROUPS - b * reps / BATCH_GROUPS;
                let mut s = [0.0; 3];
                let mut p1 = vec![0.0; m];
                let mut p2 = vec![0.0; m];
                for _ in 0..count {
                    let (u1, v1) = uv.sample(&mut rng);
                    let (u2, v2) = uv.sample(&mut rng);
                    let ip = match scheme {
                        SketchKind::Gaussian => {
                            let inv = 1.0 / mf.sqrt();
                            p1.iter_mut().for_each(|x| *x = rng.normal() * inv);
                            p2.iter_mut().for_each(|x| *x = rng.normal() * inv);
                            crate::linalg::dot(&p1, &p2)
                        }
                        _ => {
                            let (b1, s1) = (rng.below(m), rng.rademacher());
                            let (b2, s2) = (rng.below(m), rng.rademacher());
                            if b1 == b2 {
                                s1 * s2
                            } else {
                                0.0
                            }
                        }
                    };
                    let h = (u1 * v2 + u2 * v1) * ip;
                    let g = (mom.eu2 * v1 * v2 + mom.ev2 * u1 * u2 + mom.euv * (u1 * v2 + u2 * v1)) * ip / mf;
                    s[0] += h * h;
                    s[1] += h.powi(4);
                    s[2] += g * g;
                }
                let c = count as f64;
                [s[0] / c, s[1] / c, s[2] / c]
            })
            .collect();
        let col = |j: usize| per_batch.iter().map(|b| b[j]).collect::<Vec<_>>();
        let (h2, h2_se) = batch_mean_se(&col(0));
        let (h4, h4_se) = batch_mean_se(&col(1));
        let (g2, g2_se) = batch_mean_se(&col(2));
        let ratio = (g2 + h4 / n as f64) / (h2 * h2);
        ratios.push(ratio);
        let tag = format!("n={n} m={m}");
        report.rows.push(ReportRow::compared(format!("{tag}: m*E[H^2]/2"), mf * h2 / 2.0, mom.rp_limit(), mf * h2_se / 2.0, true));
        report.rows.push(ReportRow::descriptive(format!("{tag}: m*E[H^4]"), mf * h4, mf * h4_se));
        report.rows.push(ReportRow::descriptive(format!("{tag}: m^3*E[G^2]"), mf.powi(3) * g2, mf.powi(3) * g2_se));
        report.rows.push(ReportRow::descriptive(format!("{tag}: hall ratio"), ratio, f64::NAN));
    }
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    report.rows.push(ReportRow::flag("ratio decreasing along ladder", decreasing));
    report.metadata.insert("pairs_per_n".into(), reps.to_string());
    Ok(report)
}

/// Variance factor of `√m(β̃ − β̂)` relative to the limiting covariance.
fn finite_factor(scheme: SketchKind, n: usize, m: usize) -> f64 {
    match scheme {
        SketchKind::Bernoulli => 1.0 - m as f64 / n as f64,
        _ => 1.0,
    }
}

/// Coverage of nominal intervals for the last OLS coefficient after
/// standardizing `√m(β̃_p − β̂_p)` by the population variance (`V1` for
/// sampling schemes, `V0` for projections). Bernoulli sampling also carries
/// its exact finite-population factor `1 − m/n`.
///
/// SRHT and SRFT rows are informational.
pub fn normality_check(scheme: SketchKind, dgp: &DgpSpec, n: usize, m: usize, reps: usize, stream: &RngStream) -> Result<MomentReport> {
    if scheme == SketchKind::LeverageScore {
        return Err(Error::UnsupportedScheme(scheme));
    }
    if dgp.design != Design::Exogenous {
        return Err(Error::InvalidSpec("normality check needs the exogenous design".into()));
    }
    if reps < 1000 {
        return Err(Error::InvalidSpec(format!("normality check needs at least 1000 replications, got {reps}")));
    }
    let spec = DgpSpec { n, ..dgp.clone() };
    let (v0, v1) = spec.theoretical_cov()?;
    let p = spec.p;
    let v = if scheme.is_random_projection() { v0[(p - 1, p - 1)] } else { v1[(p - 1, p - 1)] };
    let sd = (v * finite_factor(scheme, n, m)).sqrt();
    let sqrt_m = (m as f64).sqrt();

    let zs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let rep = stream.derive(r as u64);
            let data = gen_exogenous(&spec, &mut rep.derive(0))?;
            let full = fit_ols(&data)?;
            let plan: SketchPlan = plan_for(scheme, m, &data, &rep.derive(1 + slot(scheme)))?;
            let sk = crate::estimators::fit_sketched(&data, &plan, crate::estimators::EstimatorKind::Ols)?;
            Ok(sqrt_m * (sk.beta[p - 1] - full.beta[p - 1]) / sd)
        })
        .collect::<Result<_>>()?;

    let hard = !matches!(scheme, SketchKind::Srht | SketchKind::Srft);
    let mut report = MomentReport::new("normality", scheme, n, m, reps, stream.master_seed());
    report.metadata.insert("design".into(), if spec.hetero { "heteroskedastic" } else { "homoskedastic" }.into());
    report.metadata.insert("standardizer".into(), if scheme.is_random_projection() { "V0" } else { "V1" }.into());
    for level in [0.90, 0.95, 0.99] {
        let crit = normal_quantile(0.5 + level / 2.0)?;
        let hits: Vec<f64> = zs.iter().map(|z| if z.abs() <= crit { 1.0 } else { 0.0 }).collect();
        let (cov, se) = batch_mean_se(&hits);
        report.rows.push(ReportRow::compared(format!("coverage {:.0}%", level * 100.0), cov, level, se, hard));
    }
    let mut sorted = zs.clone();
    sorted.sort_by(f64::total_cmp);
    let nf = sorted.len() as f64;
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let f = normal_cdf(*z);
            (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);
    report.rows.push(ReportRow::descriptive("ks distance", ks, f64::NAN));
    let (mean, mean_se) = batch_mean_se(&zs);
    report.rows.push(ReportRow::compared("mean z", mean, 0.0, mean_se, false));
    let sq: Vec<f64> = zs.iter().map(|z| z * z).collect();
    let (var, var_se) = batch_mean_se(&sq);
    report.rows.push(ReportRow::compared("E[z^2]", var, 1.0, var_se, false));
    Ok(report)
}

/// `UᵀΠᵀΠV` from the dense plan, summing row products `(Πu)_k (Πv)_k`.
pub fn direct_form(plan: &SketchPlan, u: &[f64], v: &[f64]) -> Result<f64> {
    let pi = dense_checked(plan, u, v)?;
    let pu = pi.matvec(u);
    let pv = pi.matvec(v);
    Ok(pu.iter().zip(&pv).map(|(a, b)| a * b).sum())
}

/// The diagonal part `Σ_k Σ_i (Π_ki u_i)(Π_ki v_i)` of `UᵀΠᵀΠV`, that is
/// the decomposition with every off-diagonal weight set to zero.
pub fn diagonal_form(plan: &SketchPlan, u: &[f64], v: &[f64]) -> Result<f64> {
    let pi = dense_checked(plan, u, v)?;
    Ok((0..pi.nrows())
        .map(|k| pi.row(k).iter().zip(u.iter().zip(v)).map(|(p, (a, b))| (p * a) * (p * b)).sum::<f64>())
        .sum())
}

fn dense_checked(plan: &SketchPlan, u: &[f64], v: &[f64]) -> Result<Matrix> {
    for len in [u.len(), v.len()] {
        if len != plan.n {
            return Err(Error::DimensionMismatch { expected: plan.n, found: len });
        }
    }
    Ok(plan.to_dense())
}
