use thiserror::Error;

use crate::sketch::SketchKind;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is rank deficient at diagonal index {index}")]
    RankDeficient { index: usize },
    #[error("iteration did not converge within {cap} iterations")]
    NoConvergence { cap: usize },
    #[error("length {len} is not a power of two")]
    NotPowerOfTwo { len: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("{what} = {value} is outside its domain")]
    OutOfDomain { what: &'static str, value: f64 },
    #[error("invalid probability vector: {0}")]
    BadProbabilities(String),
    #[error("sketch size m = {m} exceeds n = {n}")]
    MTooLarge { m: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row index {0} appeared more than once")]
    DuplicateRowIndex(usize),
    #[error("model not identified: {q} instruments for {p} regressors")]
    NotIdentified { p: usize, q: usize },
    #[error("sketch produced {rows} rows, at least {needed} are required")]
    SketchTooSmall { rows: usize, needed: usize },
    #[error("variance of the tested contrast is not positive")]
    ZeroVariance,
    #[error("covariance block of the tested coefficients is singular")]
    SingularBlock,
    #[error("effect size must be nonzero")]
    ZeroEffect,
    #[error("m/n = {m}/{n} is too large for the asymptotic regime")]
    BadRatio { m: usize, n: usize },
    #[error("scheme {0:?} is not supported by this operation")]
    UnsupportedScheme(SketchKind),
    #[error("embedding condition (iv) failed: sigma_min^2 = {sigma_sq}, 2 f1 = {two_f1}")]
    ConditionIvFailed { sigma_sq: f64, two_f1: f64 },
    #[error("instruments are required for this estimator")]
    MissingInstruments,
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
