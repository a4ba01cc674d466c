//! Per-realization subspace-embedding errors and the worst-case bound on
//! sketched 2SLS.
//!
//! For a realized `Π` and orthonormal bases `U_Z`, `U_X` of the instrument
//! and regressor column spaces:
//!
//! * `ε₁ = ‖U_ZᵀΠᵀΠU_Z − I‖₂`
//! * `ε₂ = ‖U_ZᵀΠᵀΠU_X − U_ZᵀU_X‖₂`
//! * `ε₃ = ‖U_ZᵀΠᵀΠê − U_Zᵀê‖ / ‖ê‖`
//!
//! The bound on `‖β̃ − β̂‖` is only claimed when
//! `σ²_min(U_ZᵀU_X) ≥ 2 f₁(ε₁, ε₂)`; plans failing that are untestable
//! rather than violations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_sketched, fit_tsls, DataBundle, EstimatorKind};
use crate::inference::ceil_guarded;
use crate::linalg::{norm2, thin_svd, Matrix, Qr, RngStream};
use crate::sketch::{plan_sketch, SketchKind, SketchPlan, SketchScheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedErrors {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub sigma_min_uzux: f64,
    pub norm_ehat: f64,
    pub sigma_min_x: f64,
    pub condition_iv_ok: bool,
}

fn check_eps1(eps1: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps1) {
        return Err(Error::OutOfDomain { what: "eps1", value: eps1 });
    }
    Ok(())
}

/// `f₁(ε₁, ε₂) = [ε₁ + ε₂(ε₂ + 2)] / (1 − ε₁)`.
///
/// ```
/// use sketchreg::embed::f1;
/// assert!((f1(0.1, 0.1).unwrap() - 0.31 / 0.9).abs() < 1e-15);
/// assert!(f1(1.0, 0.0).is_err());
/// ```
pub fn f1(eps1: f64, eps2: f64) -> Result<f64> {
    check_eps1(eps1)?;
    Ok((eps1 + eps2 * (eps2 + 2.0)) / (1.0 - eps1))
}

/// `f₂(ε₁, ε₂) = ε₂ + ε₁/(1 − ε₁) + ε₂ε₁/(1 − ε₁)`.
pub fn f2(eps1: f64, eps2: f64) -> Result<f64> {
    check_eps1(eps1)?;
    Ok(eps2 + eps1 / (1.0 - eps1) + eps2 * eps1 / (1.0 - eps1))
}

fn orthonormal_basis(a: &Matrix) -> Result<Matrix> {
    Qr::new(a)?.check_rank()?;
    Ok(thin_svd(a)?.u)
}

/// Embedding errors of `plan` on the column spaces of `x` and `z` and the
/// residual `e_hat`. Norms are exact spectral norms of the small `q × q`
/// and `q × p` error matrices.
pub fn measure_embed_errors(x: &Matrix, z: &Matrix, e_hat: &[f64], plan: &SketchPlan) -> Result<EmbedErrors> {
    let n = x.nrows();
    for rows in [z.nrows(), e_hat.len()] {
        if rows != n {
            return Err(Error::DimensionMismatch { expected: n, found: rows });
        }
    }
    let (p, q) = (x.ncols(), z.ncols());
    let ux = orthonormal_basis(x)?;
    let uz = orthonormal_basis(z)?;
    let sigma_min_x = thin_svd(x)?.sigma_min();
    let e = Matrix::column_vector(e_hat);
    let sk = plan.apply(&Matrix::hstack(&[&uz, &ux, &e])?)?;
    let suz = sk.column_block(0, q);
    let sux = sk.column_block(q, q + p);
    let se = sk.column(q + p);

    let mut d1 = suz.t_matmul(&suz).sub(&Matrix::identity(q));
    d1.symmetrize();
    let eps1 = thin_svd(&d1)?.sigma_max();
    let uzux = uz.t_matmul(&ux);
    let eps2 = thin_svd(&suz.t_matmul(&sux).sub(&uzux))?.sigma_max();
    let norm_ehat = norm2(e_hat);
    let eps3 = if norm_ehat == 0.0 {
        0.0
    } else {
        let diff: Vec<f64> = suz.t_matvec(&se).iter().zip(uz.t_matvec(e_hat)).map(|(a, b)| a - b).collect();
        norm2(&diff) / norm_ehat
    };
    let sigma_min_uzux = thin_svd(&uzux)?.sigma_min();
    let condition_iv_ok = eps1 < 1.0 && sigma_min_uzux * sigma_min_uzux >= 2.0 * f1(eps1, eps2)?;
    Ok(EmbedErrors { eps1, eps2, eps3, sigma_min_uzux, norm_ehat, sigma_min_x, condition_iv_ok })
}

/// Right-hand side of the worst-case bound for given embedding errors.
pub fn tsls_bound(errors: &EmbedErrors) -> Result<f64> {
    let a = f1(errors.eps1, errors.eps2)?;
    let b = f2(errors.eps1, errors.eps2)?;
    let s2 = errors.sigma_min_uzux * errors.sigma_min_uzux;
    let num = b + errors.eps3 * errors.norm_ehat * (1.0 + b);
    Ok(num / (errors.sigma_min_x * s2) * (1.0 + 2.0 * a / s2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: f64,
    pub actual: f64,
    pub holds: bool,
    pub errors: EmbedErrors,
}

/// Compares `‖β̃_2SLS − β̂_2SLS‖` with the bound for one plan.
///
/// Returns [`Error::ConditionIvFailed`] when the instance does not meet
/// `σ²_min(U_ZᵀU_X) ≥ 2f₁`.
pub fn tsls_bound_check(data: &DataBundle, plan: &SketchPlan) -> Result<BoundCheck> {
    let z = data.z.as_ref().ok_or(Error::MissingInstruments)?;
    let full = fit_tsls(data)?;
    let errors = measure_embed_errors(&data.x, z, &full.residuals, plan)?;
    if !errors.condition_iv_ok {
        let sigma_sq = errors.sigma_min_uzux * errors.sigma_min_uzux;
        let two_f1 = if errors.eps1 < 1.0 { 2.0 * f1(errors.eps1, errors.eps2)? } else { f64::INFINITY };
        return Err(Error::ConditionIvFailed { sigma_sq, two_f1 });
    }
    let sketched = fit_sketched(data, plan, EstimatorKind::Tsls)?;
    let diff: Vec<f64> = sketched.beta.iter().zip(&full.beta).map(|(a, b)| a - b).collect();
    let actual = norm2(&diff);
    let bound = tsls_bound(&errors)?;
    Ok(BoundCheck { bound, actual, holds: actual <= bound, errors })
}

/// Countsketch size `⌈max{q(q+1), 2pq} / (ε²δ)⌉` sufficient for the
/// embedding conditions.
///
/// ```
/// use sketchreg::embed::countsketch_size_bound;
/// assert_eq!(countsketch_size_bound(11, 40, 1.0 / 3.0, 0.05).unwrap(), 295_200);
/// ```
pub fn countsketch_size_bound(p: usize, q: usize, eps: f64, delta: f64) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0 / 3.0) {
        return Err(Error::OutOfDomain { what: "eps", value: eps });
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::OutOfDomain { what: "delta", value: delta });
    }
    let (p, q) = (p as f64, q as f64);
    let top = (q * (q + 1.0)).max(2.0 * p * q);
    Ok(ceil_guarded(top / (eps * eps * delta)) as usize)
}

/// Strong-instrument design with `p = 2`, `q = 4`:
/// `Z = [1, z₂, z₃, z₄]`, `x = z₂ + z₃ + z₄ + 0.3η`, `X = [1, x]` and
/// `y = 1 + x + η + ε`.
pub fn audit_fixture(n: usize, stream: &RngStream) -> Result<DataBundle> {
    let mut rng = stream.restart();
    let mut z = Matrix::zeros(n, 4);
    let mut x = Matrix::zeros(n, 2);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let zr = [1.0, rng.normal(), rng.normal(), rng.normal()];
        let eta = rng.normal();
        let eps = rng.normal();
        let xi = zr[1] + zr[2] + zr[3] + 0.3 * eta;
        z.row_mut(i).copy_from_slice(&zr);
        x.row_mut(i).copy_from_slice(&[1.0, xi]);
        y[i] = 1.0 + xi + eta + eps;
    }
    DataBundle::new(y, x, Some(z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditOutcome {
    Holds,
    Violated,
    /// Condition (iv) failed; the bound makes no claim.
    Untestable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub scheme: SketchKind,
    pub plan_index: usize,
    /// Stream id of the plan under the audit's master seed.
    pub plan_stream: u64,
    pub errors: EmbedErrors,
    pub bound: Option<f64>,
    pub actual: Option<f64>,
    pub outcome: AuditOutcome,
}

/// Audits `plans` independent plans of one scheme on a fixed data set.
pub fn audit_plans(data: &DataBundle, scheme: SketchKind, m: usize, plans: usize, stream: &RngStream) -> Result<Vec<AuditRow>> {
    let z = data.z.as_ref().ok_or(Error::MissingInstruments)?;
    let full = fit_tsls(data)?;
    (0..plans)
        .into_par_iter()
        .map(|j| {
            let ps = stream.derive(j as u64);
            let plan = plan_sketch(SketchScheme::new(scheme, m), data.n(), &ps, None)?;
            let errors = measure_embed_errors(&data.x, z, &full.residuals, &plan)?;
            let (bound, actual, outcome) = if errors.condition_iv_ok {
                let check = tsls_bound_check(data, &plan)?;
                let outcome = if check.holds { AuditOutcome::Holds } else { AuditOutcome::Violated };
                (Some(check.bound), Some(check.actual), outcome)
            } else {
                (None, None, AuditOutcome::Untestable)
            };
            Ok(AuditRow { scheme, plan_index: j, plan_stream: ps.stream_id(), errors, bound, actual, outcome })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub scheme: SketchKind,
    pub plans: usize,
    pub qualifying: usize,
    pub violations: usize,
    /// Largest `actual / bound` among qualifying plans.
    pub max_ratio: f64,
}

impl AuditSummary {
    pub fn from_rows(scheme: SketchKind, rows: &[AuditRow]) -> Self {
        let qualifying: Vec<&AuditRow> = rows.iter().filter(|r| r.outcome != AuditOutcome::Untestable).collect();
        let violations = qualifying.iter().filter(|r| r.outcome == AuditOutcome::Violated).count();
        let max_ratio = qualifying
            .iter()
            .filter_map(|r| Some(r.actual? / r.bound?))
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        AuditSummary { scheme, plans: rows.len(), qualifying: qualifying.len(), violations, max_ratio }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_values() {
        assert_eq!(f1(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(f2(0.0, 0.0).unwrap(), 0.0);
        assert!((f1(0.1, 0.1).unwrap() - 0.344_444_444_444_444_4).abs() < 1e-15);
        assert!((f2(0.1, 0.1).unwrap() - 0.222_222_222_222_222_2).abs() < 1e-15);
        assert!(f2(1.5, 0.0).is_err());
    }

    #[test]
    fn size_bound_examples() {
        assert_eq!(countsketch_size_bound(1, 1, 1.0 / 3.0, 0.5).unwrap(), 36);
        // q + 1 = 2p: both terms equal.
        assert_eq!(countsketch_size_bound(3, 5, 1.0 / 3.0, 0.25).unwrap(), 1080);
        assert!(countsketch_size_bound(1, 1, 0.34, 0.1).is_err());
        assert!(countsketch_size_bound(1, 1, 0.3, 0.6).is_err());
        assert!(countsketch_size_bound(1, 1, 0.3, 0.0).is_err());
    }

    #[test]
    fn identity_plan_has_no_error() {
        let data = audit_fixture(128, &RngStream::new(5, 0)).unwrap();
        let plan = plan_sketch(SketchScheme::new(SketchKind::Bernoulli, 128), 128, &RngStream::new(1, 1), None).unwrap();
        let check = tsls_bound_check(&data, &plan).unwrap();
        assert_eq!(check.actual, 0.0);
        assert!(check.holds);
        assert!(check.errors.eps1 < 1e-12 && check.errors.eps2 < 1e-12 && check.errors.eps3 < 1e-12);
    }

    #[test]
    fn same_column_space() {
        let data = audit_fixture(64, &RngStream::new(2, 0)).unwrap();
        let z = data.z.as_ref().unwrap();
        let plan = plan_sketch(SketchScheme::new(SketchKind::Gaussian, 32), 64, &RngStream::new(1, 1), None).unwrap();
        let e = measure_embed_errors(z, z, &data.y, &plan).unwrap();
        assert!((e.sigma_min_uzux - 1.0).abs() < 1e-12);
    }
}
