//! Full-sample and sketched OLS / 2SLS with homoskedastic and robust
//! covariance estimates, t tests and the first-stage F test.
//!
//! Covariances are stored on the scale of the estimator itself: `cov_homo`
//! for OLS is `s²(XᵀX)^{-1}`, so a standard error is the square root of a
//! diagonal entry with no further division by the sample size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chi_square_sf, normal_two_sided_p, Matrix, Qr};
use crate::sketch::{sketch_data, SketchPlan};

/// Response, regressors and optional instruments sharing `n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBundle {
    pub y: Vec<f64>,
    pub x: Matrix,
    pub z: Option<Matrix>,
}

impl DataBundle {
    pub fn new(y: Vec<f64>, x: Matrix, z: Option<Matrix>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) || !x.is_finite() {
            return Err(Error::NonFinite);
        }
        if let Some(z) = &z {
            if z.nrows() != y.len() {
                return Err(Error::DimensionMismatch { expected: y.len(), found: z.nrows() });
            }
            if !z.is_finite() {
                return Err(Error::NonFinite);
            }
            if z.ncols() < x.ncols() {
                return Err(Error::NotIdentified { p: x.ncols(), q: z.ncols() });
            }
        }
        Ok(DataBundle { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> Option<usize> {
        self.z.as_ref().map(Matrix::ncols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ols,
    Tsls,
}

/// Homoskedasticity-only (`V0`/`W0`) or heteroskedasticity-robust (`V1`/`W1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovKind {
    Homo,
    Robust,
}

impl CovKind {
    pub const BOTH: [CovKind; 2] = [CovKind::Homo, CovKind::Robust];

    pub fn label(self) -> &'static str {
        match self {
            CovKind::Homo => "se0",
            CovKind::Robust => "se1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: EstimatorKind,
    pub beta: Vec<f64>,
    /// `y - Xβ̂`; structural residuals for 2SLS.
    pub residuals: Vec<f64>,
    pub cov_homo: Matrix,
    pub cov_robust: Matrix,
    pub sample_size_used: usize,
    /// `êᵀê / sample_size_used`.
    pub s_squared: f64,
    /// Target sketch size for sketched fits.
    pub effective_m: Option<usize>,
}

impl FitResult {
    pub fn cov(&self, kind: CovKind) -> &Matrix {
        match kind {
            CovKind::Homo => &self.cov_homo,
            CovKind::Robust => &self.cov_robust,
        }
    }

    pub fn std_errors(&self, kind: CovKind) -> Vec<f64> {
        self.cov(kind).diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

fn residuals(data: &DataBundle, beta: &[f64]) -> Vec<f64> {
    data.x.matvec(beta).iter().zip(&data.y).map(|(f, y)| y - f).collect()
}

/// `Σ_i w_i a_i a_iᵀ` over the rows of `a`.
fn weighted_gram(a: &Matrix, w: &[f64]) -> Matrix {
    let k = a.ncols();
    let mut out = Matrix::zeros(k, k);
    for (i, wi) in w.iter().enumerate() {
        let r = a.row(i);
        for p in 0..k {
            let s = wi * r[p];
            if s == 0.0 {
                continue;
            }
            for q in p..k {
                out[(p, q)] += s * r[q];
            }
        }
    }
    for p in 0..k {
        for q in 0..p {
            out[(p, q)] = out[(q, p)];
        }
    }
    out
}

fn sandwich(bread: &Matrix, rows: &Matrix, resid: &[f64]) -> Matrix {
    let sq: Vec<f64> = resid.iter().map(|e| e * e).collect();
    let meat = weighted_gram(rows, &sq);
    let mut v = bread.matmul(&meat).matmul(bread);
    v.symmetrize();
    v
}

fn assemble(kind: EstimatorKind, data: &DataBundle, beta: Vec<f64>, bread: Matrix, rows: &Matrix) -> FitResult {
    let resid = residuals(data, &beta);
    let n = data.n();
    let s2 = resid.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let cov_robust = sandwich(&bread, rows, &resid);
    FitResult {
        kind,
        beta,
        cov_homo: bread.scale(s2),
        cov_robust,
        residuals: resid,
        sample_size_used: n,
        s_squared: s2,
        effective_m: None,
    }
}

/// Ordinary least squares with `s²(XᵀX)^{-1}` and the White sandwich.
///
/// ```
/// use sketchreg::estimators::{fit_ols, DataBundle};
/// use sketchreg::linalg::Matrix;
/// let x = Matrix::from_fn(4, 1, |_, _| 1.0);
/// let fit = fit_ols(&DataBundle::new(vec![1.0, 2.0, 3.0, 6.0], x, None).unwrap()).unwrap();
/// assert!((fit.beta[0] - 3.0).abs() < 1e-14);
/// assert!((fit.cov_homo[(0, 0)] - fit.s_squared / 4.0).abs() < 1e-14);
/// ```
pub fn fit_ols(data: &DataBundle) -> Result<FitResult> {
    let qr = Qr::new(&data.x)?;
    let beta = qr.solve(&data.y)?;
    let bread = qr.gram_inverse()?;
    Ok(assemble(EstimatorKind::Ols, data, beta, bread, &data.x))
}

/// Two-stage least squares through a QR of `Z` and a QR of the fitted
/// first stage `X̂ = P_Z X`; `P_Z` is never formed.
pub fn fit_tsls(data: &DataBundle) -> Result<FitResult> {
    let z = data.z.as_ref().ok_or(Error::MissingInstruments)?;
    if z.ncols() < data.p() {
        return Err(Error::NotIdentified { p: data.p(), q: z.ncols() });
    }
    let qz = Qr::new(z)?;
    qz.check_rank()?;
    let mut xhat = Matrix::zeros(data.n(), data.p());
    for j in 0..data.p() {
        xhat.set_column(j, &qz.project(&data.x.column(j)));
    }
    let qx = Qr::new(&xhat)?;
    let beta = qx.solve(&data.y)?;
    let bread = qx.gram_inverse()?;
    // Â Z_i = (X̂ᵀX̂)^{-1} X̂_i, so the robust meat uses the fitted rows.
    Ok(assemble(EstimatorKind::Tsls, data, beta, bread, &xhat))
}

pub fn fit(data: &DataBundle, kind: EstimatorKind) -> Result<FitResult> {
    match kind {
        EstimatorKind::Ols => fit_ols(data),
        EstimatorKind::Tsls => fit_tsls(data),
    }
}

/// Fits on `(Πy, ΠX, ΠZ)`. Residual variances divide by the realized row
/// count; `effective_m` records the target sketch size.
pub fn fit_sketched(data: &DataBundle, plan: &SketchPlan, kind: EstimatorKind) -> Result<FitResult> {
    if kind == EstimatorKind::Tsls && data.z.is_none() {
        return Err(Error::MissingInstruments);
    }
    let sk = sketch_data(plan, data)?;
    let needed = match kind {
        EstimatorKind::Ols => data.p(),
        EstimatorKind::Tsls => data.q().unwrap_or(0),
    };
    if sk.rows_out < needed {
        return Err(Error::SketchTooSmall { rows: sk.rows_out, needed });
    }
    let m = sk.effective_m;
    let mut out = fit(&sk.into_bundle()?, kind)?;
    out.effective_m = Some(m);
    Ok(out)
}

/// Nominal levels reported in every [`TestResult`].
pub const NOMINAL_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df_num: usize,
    /// `None` stands for an infinite denominator (asymptotic reference).
    pub df_denom: Option<usize>,
    pub p_value: f64,
    pub reject_at: Vec<(f64, bool)>,
}

impl TestResult {
    fn new(statistic: f64, df_num: usize, p_value: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestResult {
            statistic,
            df_num,
            df_denom: None,
            p_value,
            reject_at: NOMINAL_LEVELS.iter().map(|&a| (a, p_value < a)).collect(),
        }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Two-sided test of `cᵀβ = null_value` against the standard normal.
///
/// ```
/// use sketchreg::estimators::{fit_ols, t_test, CovKind, DataBundle};
/// use sketchreg::linalg::Matrix;
/// let x = Matrix::from_fn(4, 1, |_, _| 1.0);
/// let fit = fit_ols(&DataBundle::new(vec![1.0, 2.0, 3.0, 6.0], x, None).unwrap()).unwrap();
/// let t = t_test(&fit, &[1.0], 3.0, CovKind::Homo).unwrap();
/// assert!(t.statistic.abs() < 1e-12);
/// assert!(t.p_value > 0.999_999);
/// ```
pub fn t_test(fit: &FitResult, c: &[f64], null_value: f64, cov: CovKind) -> Result<TestResult> {
    if c.len() != fit.beta.len() {
        return Err(Error::DimensionMismatch { expected: fit.beta.len(), found: c.len() });
    }
    let v = fit.cov(cov);
    let var: f64 = crate::linalg::dot(c, &v.matvec(c));
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let est: f64 = crate::linalg::dot(c, &fit.beta);
    let t = (est - null_value) / var.sqrt();
    Ok(TestResult::new(t, 1, normal_two_sided_p(t)))
}

/// Solves `A w = b` for symmetric positive definite `A`.
fn cholesky_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let k = a.nrows();
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut l = Matrix::zeros(k, k);
    for j in 0..k {
        let mut d = a[(j, j)];
        for t in 0..j {
            d -= l[(j, t)] * l[(j, t)];
        }
        if !(d > 1e-12 * scale) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..k {
            let mut s = a[(i, j)];
            for t in 0..j {
                s -= l[(i, t)] * l[(j, t)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut w = b.to_vec();
    for i in 0..k {
        for t in 0..i {
            w[i] -= l[(i, t)] * w[t];
        }
        w[i] /= l[(i, i)];
    }
    for i in (0..k).rev() {
        for t in (i + 1)..k {
            w[i] -= l[(t, i)] * w[t];
        }
        w[i] /= l[(i, i)];
    }
    Some(w)
}

/// First-stage F test that the `excluded` instruments do not enter the
/// regression of regressor `endogenous_col` on `Z`.
pub fn first_stage_f(data: &DataBundle, endogenous_col: usize, excluded: &[usize], cov: CovKind) -> Result<TestResult> {
    let z = data.z.as_ref().ok_or(Error::MissingInstruments)?;
    if endogenous_col >= data.p() {
        return Err(Error::DimensionMismatch { expected: data.p(), found: endogenous_col });
    }
    if excluded.is_empty() {
        return Err(Error::InvalidSpec("the excluded instrument set is empty".into()));
    }
    if let Some(&bad) = excluded.iter().find(|&&j| j >= z.ncols()) {
        return Err(Error::DimensionMismatch { expected: z.ncols(), found: bad });
    }
    let stage = DataBundle::new(data.x.column(endogenous_col), z.clone(), None)?;
    let f = fit_ols(&stage)?;
    let v = f.cov(cov);
    let zeta: Vec<f64> = excluded.iter().map(|&j| f.beta[j]).collect();
    let block = Matrix::from_fn(excluded.len(), excluded.len(), |a, b| v[(excluded[a], excluded[b])]);
    let w = cholesky_solve(&block, &zeta).ok_or(Error::SingularBlock)?;
    let d = excluded.len();
    let stat = crate::linalg::dot(&zeta, &w) / d as f64;
    Ok(TestResult::new(stat, d, chi_square_sf(stat * d as f64, d)))
}
