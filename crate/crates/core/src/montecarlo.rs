//! Simulation designs and size/power experiments for sketched t and F tests.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{first_stage_f, fit_sketched, t_test, CovKind, DataBundle, EstimatorKind};
use crate::linalg::{mvn_ar1_into, Matrix, Qr, RngStream};
use crate::sketch::{leverage_probs, plan_sketch, sketch_data, SketchKind, SketchPlan, SketchScheme};

/// Nominal level of every simulated test.
pub const NOMINAL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Exogenous,
    Endogenous,
}

/// Which equation of the endogenous design carries the heteroskedasticity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeteroEquation {
    FirstStage,
    Outcome,
}

/// Data generating process.
///
/// Exogenous: `y = Xβ + σ(X) e` with `X = [1, AR(1) normals]` and
/// `σ(X) = exp(X_p)` under heteroskedasticity.
///
/// Endogenous: `Z = [1, AR(1) normals]`, `X = [1, Z_2..Z_{p-1}, X_p]`,
/// `X_p = Zζ + σ₁(Z)η`, `y = Xβ + σ₂(Z)(η + ε)`, where the heteroskedastic
/// scale is `exp((5/q) Σ_{j≥2} |Z_j|) / 100` on the chosen equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub design: Design,
    pub hetero: bool,
    pub hetero_equation: HeteroEquation,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub rho: f64,
    pub beta0: Vec<f64>,
    pub zeta0: Vec<f64>,
}

fn default_beta(p: usize) -> Vec<f64> {
    (0..p).map(|j| if j == 0 { 0.0 } else { 1.0 }).collect()
}

impl DgpSpec {
    pub fn exogenous(n: usize, p: usize, hetero: bool) -> Self {
        DgpSpec {
            design: Design::Exogenous,
            hetero,
            hetero_equation: HeteroEquation::Outcome,
            n,
            p,
            q: p,
            rho: 0.5,
            beta0: default_beta(p),
            zeta0: Vec::new(),
        }
    }

    /// First-stage design with heteroskedastic `σ₁` and `σ₂ = 1`; the
    /// excluded instruments have coefficient `excluded_zeta`.
    pub fn first_stage(n: usize, p: usize, q: usize, hetero: bool, excluded_zeta: f64) -> Self {
        DgpSpec {
            design: Design::Endogenous,
            hetero,
            hetero_equation: HeteroEquation::FirstStage,
            n,
            p,
            q,
            rho: 0.5,
            beta0: default_beta(p),
            zeta0: Self::zeta(p, q, excluded_zeta),
        }
    }

    /// 2SLS design with strong instruments (`ζ_j = 0.5`), `σ₁ = 1` and
    /// heteroskedastic `σ₂`.
    pub fn tsls(n: usize, p: usize, q: usize, hetero: bool) -> Self {
        DgpSpec {
            design: Design::Endogenous,
            hetero,
            hetero_equation: HeteroEquation::Outcome,
            n,
            p,
            q,
            rho: 0.5,
            beta0: default_beta(p),
            zeta0: Self::zeta(p, q, 0.5),
        }
    }

    /// `(0, 0.1, …, 0.1)` on the included block, `excluded` on the rest.
    pub fn zeta(p: usize, q: usize, excluded: f64) -> Vec<f64> {
        (0..q)
            .map(|j| match j {
                0 => 0.0,
                j if j < p - 1 => 0.1,
                _ => excluded,
            })
            .collect()
    }

    /// Same design with the excluded-instrument coefficients replaced.
    pub fn with_excluded_zeta(&self, excluded: f64) -> Self {
        DgpSpec { zeta0: Self::zeta(self.p, self.q, excluded), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidSpec("p must be at least 2".into()));
        }
        if self.beta0.len() != self.p {
            return Err(Error::InvalidSpec(format!("beta0 has {} entries for p = {}", self.beta0.len(), self.p)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidSpec(format!("rho = {} must satisfy |rho| < 1", self.rho)));
        }
        if self.n < self.p.max(self.q) {
            return Err(Error::InvalidSpec(format!("n = {} is smaller than the model dimension", self.n)));
        }
        if self.design == Design::Endogenous {
            if self.q < self.p {
                return Err(Error::NotIdentified { p: self.p, q: self.q });
            }
            if self.zeta0.len() != self.q {
                return Err(Error::InvalidSpec(format!("zeta0 has {} entries for q = {}", self.zeta0.len(), self.q)));
            }
        }
        Ok(())
    }

    /// Population `(V0, V1)` of the exogenous design for the asymptotic
    /// covariance of `√m (β̃ - β̂)`.
    ///
    /// With `Q = E[XXᵀ] = diag(1, Σ)`: homoskedastic `V0 = V1 = Q^{-1}`.
    /// Heteroskedastic: `E[σ²] = e²`, `V0 = e² Q^{-1}` and `V1 = Q^{-1} M Q^{-1}`
    /// where `M = E[XXᵀ exp(2X_p)] = e² E_μ[XXᵀ]` under the tilted mean
    /// `μ = 2 Σ_{·,p}`.
    pub fn theoretical_cov(&self) -> Result<(Matrix, Matrix)> {
        if self.design != Design::Exogenous {
            return Err(Error::InvalidSpec("theoretical covariance is available for the exogenous design".into()));
        }
        self.validate()?;
        let p = self.p;
        let d = p - 1;
        let sigma = Matrix::from_fn(d, d, |i, j| self.rho.powi((i as i32 - j as i32).abs()));
        let mut q = Matrix::zeros(p, p);
        q[(0, 0)] = 1.0;
        for i in 0..d {
            for j in 0..d {
                q[(i + 1, j + 1)] = sigma[(i, j)];
            }
        }
        let qinv = invert_spd(&q)?;
        if !self.hetero {
            return Ok((qinv.clone(), qinv));
        }
        let e2 = 2f64.exp();
        let mu: Vec<f64> = (0..d).map(|i| 2.0 * sigma[(i, d - 1)]).collect();
        let mut tilted = Matrix::zeros(p, p);
        tilted[(0, 0)] = 1.0;
        for i in 0..d {
            tilted[(0, i + 1)] = mu[i];
            tilted[(i + 1, 0)] = mu[i];
            for j in 0..d {
                tilted[(i + 1, j + 1)] = sigma[(i, j)] + mu[i] * mu[j];
            }
        }
        let v0 = qinv.scale(e2);
        let mut v1 = qinv.matmul(&tilted.scale(e2)).matmul(&qinv);
        v1.symmetrize();
        Ok((v0, v1))
    }
}

fn invert_spd(a: &Matrix) -> Result<Matrix> {
    // A^{-1} = (AᵀA)^{-1} Aᵀ from one QR of A.
    let qr = Qr::new(a)?;
    let g = qr.gram_inverse()?;
    let mut inv = g.matmul(&a.transpose());
    inv.symmetrize();
    Ok(inv)
}

fn hetero_scale(z_row: &[f64], q: usize) -> f64 {
    let s: f64 = z_row[1..].iter().map(|v| v.abs()).sum();
    (5.0 / q as f64 * s).exp() / 100.0
}

/// Draws one exogenous data set.
pub fn gen_exogenous(spec: &DgpSpec, stream: &mut RngStream) -> Result<DataBundle> {
    if spec.design != Design::Exogenous {
        return Err(Error::InvalidSpec("gen_exogenous needs the exogenous design".into()));
    }
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut x = Matrix::zeros(n, p);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = x.row_mut(i);
        row[0] = 1.0;
        mvn_ar1_into(&mut row[1..], spec.rho, stream);
        let e = stream.normal();
        let sigma = if spec.hetero { row[p - 1].exp() } else { 1.0 };
        y[i] = crate::linalg::dot(row, &spec.beta0) + sigma * e;
    }
    DataBundle::new(y, x, None)
}

/// Draws one endogenous data set with instruments.
pub fn gen_endogenous(spec: &DgpSpec, stream: &mut RngStream) -> Result<DataBundle> {
    if spec.design != Design::Endogenous {
        return Err(Error::InvalidSpec("gen_endogenous needs the endogenous design".into()));
    }
    spec.validate()?;
    let (n, p, q) = (spec.n, spec.p, spec.q);
    let mut z = Matrix::zeros(n, q);
    let mut x = Matrix::zeros(n, p);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let zr = z.row_mut(i);
        zr[0] = 1.0;
        mvn_ar1_into(&mut zr[1..], spec.rho, stream);
        let eta = stream.normal();
        let eps = stream.normal();
        let h = if spec.hetero { hetero_scale(zr, q) } else { 1.0 };
        let (s1, s2) = match spec.hetero_equation {
            HeteroEquation::FirstStage => (h, 1.0),
            HeteroEquation::Outcome => (1.0, h),
        };
        let xp = crate::linalg::dot(zr, &spec.zeta0) + s1 * eta;
        let zr = z.row(i).to_vec();
        let xr = x.row_mut(i);
        xr[..p - 1].copy_from_slice(&zr[..p - 1]);
        xr[p - 1] = xp;
        y[i] = crate::linalg::dot(xr, &spec.beta0) + s2 * (eta + eps);
    }
    DataBundle::new(y, x, Some(z))
}

pub fn generate(spec: &DgpSpec, stream: &mut RngStream) -> Result<DataBundle> {
    match spec.design {
        Design::Exogenous => gen_exogenous(spec, stream),
        Design::Endogenous => gen_endogenous(spec, stream),
    }
}

/// Hypothesis evaluated in a size/power experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SimTest {
    /// `H0: cᵀβ = null`; power is the rejection rate of `H0: cᵀβ = alt`
    /// on the same fits.
    TTest { c: Vec<f64>, null: f64, alt: f64 },
    /// Joint test that the excluded instruments are irrelevant; size at
    /// `null_zeta`, power at `alt_zeta`.
    FirstStageF { null_zeta: f64, alt_zeta: f64 },
}

impl SimTest {
    /// t test of `β_p = 1` against the alternative `β_p = alt`.
    pub fn last_coefficient(p: usize, alt: f64) -> Self {
        let c = (0..p).map(|j| if j + 1 == p { 1.0 } else { 0.0 }).collect();
        SimTest::TTest { c, null: 1.0, alt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Size,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub scheme: SketchKind,
    pub experiment: Experiment,
    pub cov: CovKind,
    pub rejections: usize,
    pub valid_reps: usize,
    pub failures: usize,
    pub rate: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTable {
    pub dgp: DgpSpec,
    pub test: SimTest,
    pub m: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub rows: Vec<SimRow>,
}

impl SimTable {
    pub fn row(&self, scheme: SketchKind, experiment: Experiment, cov: CovKind) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.experiment == experiment && r.cov == cov)
    }

    /// Rejection rate of one cell; `NaN` if the cell is absent.
    pub fn rate(&self, scheme: SketchKind, experiment: Experiment, cov: CovKind) -> f64 {
        self.row(scheme, experiment, cov).map_or(f64::NAN, |r| r.rate)
    }

    pub fn schemes(&self) -> Vec<SketchKind> {
        let mut s: Vec<SketchKind> = Vec::new();
        for r in &self.rows {
            if !s.contains(&r.scheme) {
                s.push(r.scheme);
            }
        }
        s
    }
}

impl fmt::Display for SimTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = match self.test {
            SimTest::TTest { .. } => ("s.e.0", "s.e.1"),
            SimTest::FirstStageF { .. } => ("V.0", "V.1"),
        };
        writeln!(
            f,
            "{:?} design, {}, n = {}, m = {}, reps = {}",
            self.dgp.design,
            if self.dgp.hetero { "heteroskedastic" } else { "homoskedastic" },
            self.dgp.n,
            self.m,
            self.reps
        )?;
        writeln!(f, "{:<12} {:>8} {:>8} {:>8} {:>8} {:>9}", "", "size", "", "power", "", "")?;
        writeln!(f, "{:<12} {:>8} {:>8} {:>8} {:>8} {:>9}", "scheme", a, b, a, b, "failures")?;
        for s in self.schemes() {
            let cell = |e, c| self.rate(s, e, c);
            let failures = self.row(s, Experiment::Size, CovKind::Homo).map_or(0, |r| r.failures);
            writeln!(
                f,
                "{:<12} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>9}",
                s.name(),
                cell(Experiment::Size, CovKind::Homo),
                cell(Experiment::Size, CovKind::Robust),
                cell(Experiment::Power, CovKind::Homo),
                cell(Experiment::Power, CovKind::Robust),
                failures
            )?;
        }
        Ok(())
    }
}

/// Index of `kind` in [`SketchKind::ALL`], used to derive plan streams
/// independently of the order schemes are listed in.
fn scheme_slot(kind: SketchKind) -> u64 {
    SketchKind::ALL.iter().position(|k| *k == kind).expect("known scheme") as u64
}

/// Draws the plan of `kind` for one replication.
pub fn plan_for(kind: SketchKind, m: usize, data: &DataBundle, stream: &RngStream) -> Result<SketchPlan> {
    let probs = if kind == SketchKind::LeverageScore { Some(leverage_probs(&data.x)?) } else { None };
    plan_sketch(SketchScheme::new(kind, m), data.n(), stream, probs.as_deref())
}

/// Rejection indicators `[size se0, size se1, power se0, power se1]`.
type Outcome = Result<[bool; 4]>;

fn t_outcome(data: &DataBundle, plan: &SketchPlan, est: EstimatorKind, c: &[f64], null: f64, alt: f64) -> Outcome {
    let fit = fit_sketched(data, plan, est)?;
    let mut out = [false; 4];
    for (k, cov) in CovKind::BOTH.iter().enumerate() {
        out[k] = t_test(&fit, c, null, *cov)?.rejects(NOMINAL);
        out[2 + k] = t_test(&fit, c, alt, *cov)?.rejects(NOMINAL);
    }
    Ok(out)
}

fn f_outcome(null_data: &DataBundle, alt_data: &DataBundle, plan: &SketchPlan) -> Outcome {
    let p = null_data.p();
    let q = null_data.q().ok_or(Error::MissingInstruments)?;
    let excluded: Vec<usize> = (p - 1..q).collect();
    let mut out = [false; 4];
    for (slot, data) in [(0, null_data), (2, alt_data)] {
        let sk = sketch_data(plan, data)?;
        if sk.rows_out < q {
            return Err(Error::SketchTooSmall { rows: sk.rows_out, needed: q });
        }
        let bundle = sk.into_bundle()?;
        for (k, cov) in CovKind::BOTH.iter().enumerate() {
            out[slot + k] = first_stage_f(&bundle, p - 1, &excluded, *cov)?.rejects(NOMINAL);
        }
    }
    Ok(out)
}

/// Size and power of the sketched test for each scheme; every replication
/// draws fresh data and a fresh plan per scheme.
///
/// Replication `r` uses the stream `stream.derive(r)`, so the table does not
/// depend on the number of worker threads. Failed fits are counted in
/// `failures` and excluded from the rates.
pub fn run_size_power(
    dgp: &DgpSpec,
    schemes: &[SketchKind],
    m: usize,
    reps: usize,
    test: &SimTest,
    stream: &RngStream,
) -> Result<SimTable> {
    dgp.validate()?;
    if schemes.is_empty() {
        return Err(Error::InvalidSpec("no sketch schemes selected".into()));
    }
    if dgp.design == Design::Endogenous && schemes.contains(&SketchKind::LeverageScore) {
        return Err(Error::InvalidSpec("leverage sampling is only available for the exogenous design".into()));
    }
    let (needed, estimator) = match (dgp.design, test) {
        (Design::Exogenous, SimTest::TTest { .. }) => (dgp.p, EstimatorKind::Ols),
        (Design::Endogenous, SimTest::TTest { .. }) => (dgp.q, EstimatorKind::Tsls),
        (Design::Endogenous, SimTest::FirstStageF { .. }) => (dgp.q, EstimatorKind::Ols),
        (Design::Exogenous, SimTest::FirstStageF { .. }) => {
            return Err(Error::InvalidSpec("the first-stage F test needs the endogenous design".into()))
        }
    };
    if m < needed {
        return Err(Error::SketchTooSmall { rows: m, needed });
    }
    if let SimTest::TTest { c, .. } = test {
        if c.len() != dgp.p {
            return Err(Error::DimensionMismatch { expected: dgp.p, found: c.len() });
        }
    }

    let per_rep: Vec<Vec<Outcome>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep = stream.derive(r as u64);
            let outcomes = match test {
                SimTest::TTest { c, null, alt } => {
                    let data = generate(dgp, &mut rep.derive(0));
                    schemes
                        .iter()
                        .map(|&kind| {
                            let data = data.as_ref().map_err(Clone::clone)?;
                            let plan = plan_for(kind, m, data, &rep.derive(1 + scheme_slot(kind)))?;
                            t_outcome(data, &plan, estimator, c, *null, *alt)
                        })
                        .collect()
                }
                SimTest::FirstStageF { null_zeta, alt_zeta } => {
                    let null_data = generate(&dgp.with_excluded_zeta(*null_zeta), &mut rep.derive(0));
                    let alt_data = generate(&dgp.with_excluded_zeta(*alt_zeta), &mut rep.derive(0));
                    schemes
                        .iter()
                        .map(|&kind| {
                            let nd = null_data.as_ref().map_err(Clone::clone)?;
                            let ad = alt_data.as_ref().map_err(Clone::clone)?;
                            let plan = plan_for(kind, m, nd, &rep.derive(1 + scheme_slot(kind)))?;
                            f_outcome(nd, ad, &plan)
                        })
                        .collect()
                }
            };
            outcomes
        })
        .collect();

    let mut rows = Vec::new();
    for (s, &kind) in schemes.iter().enumerate() {
        let mut counts = [0usize; 4];
        let mut failures = 0;
        for rep in &per_rep {
            match &rep[s] {
                Ok(flags) => {
                    for (c, f) in counts.iter_mut().zip(flags) {
                        *c += *f as usize;
                    }
                }
                Err(_) => failures += 1,
            }
        }
        let valid = reps - failures;
        for (slot, (experiment, cov)) in [
            (Experiment::Size, CovKind::Homo),
            (Experiment::Size, CovKind::Robust),
            (Experiment::Power, CovKind::Homo),
            (Experiment::Power, CovKind::Robust),
        ]
        .into_iter()
        .enumerate()
        {
            let rate = if valid > 0 { counts[slot] as f64 / valid as f64 } else { f64::NAN };
            let mc_se = if valid > 0 { (rate * (1.0 - rate) / valid as f64).sqrt() } else { f64::NAN };
            rows.push(SimRow { scheme: kind, experiment, cov, rejections: counts[slot], valid_reps: valid, failures, rate, mc_se });
        }
    }
    Ok(SimTable { dgp: dgp.clone(), test: test.clone(), m, reps, master_seed: stream.master_seed(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_layout() {
        assert_eq!(DgpSpec::zeta(3, 5, 0.5), vec![0.0, 0.1, 0.5, 0.5, 0.5]);
        let f = DgpSpec::first_stage(100, 6, 21, true, 0.0);
        assert_eq!(f.zeta0.iter().filter(|v| **v == 0.1).count(), 4);
        assert_eq!(f.with_excluded_zeta(0.1).zeta0[20], 0.1);
    }

    #[test]
    fn endogenous_layout_shares_exogenous_block() {
        let spec = DgpSpec::tsls(50, 4, 7, false);
        let d = gen_endogenous(&spec, &mut RngStream::new(1, 1)).unwrap();
        let z = d.z.as_ref().unwrap();
        for i in 0..50 {
            assert_eq!(&d.x.row(i)[..3], &z.row(i)[..3]);
        }
        assert!(gen_exogenous(&spec, &mut RngStream::new(1, 1)).is_err());
    }

    #[test]
    fn homoskedastic_covariance_is_inverse_design_moment() {
        let (v0, v1) = DgpSpec::exogenous(10, 6, false).theoretical_cov().unwrap();
        assert_eq!(v0, v1);
        // Tridiagonal AR(1) precision: corners 1/(1-ρ²) = 4/3.
        assert!((v0[(5, 5)] - 4.0 / 3.0).abs() < 1e-12);
        assert!((v0[(3, 3)] - (1.0 + 0.25) / 0.75).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut s = DgpSpec::exogenous(10, 1, false);
        assert!(s.validate().is_err());
        s = DgpSpec::first_stage(10, 4, 3, false, 0.0);
        assert!(matches!(s.validate(), Err(Error::NotIdentified { .. })));
    }
}
