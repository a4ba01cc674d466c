//! Sketched least squares and two-stage least squares with valid inference.
//!
//! A sketch replaces `(y, X, Z)` by `(Πy, ΠX, ΠZ)` for a random `m × n`
//! matrix `Π`. This crate builds the sketches ([`sketch`]), fits OLS and 2SLS
//! with homoskedastic and robust covariances on the result ([`estimators`]),
//! sizes the sketch for a target power ([`inference`]) and checks the
//! underlying moment and embedding results by simulation ([`moments`],
//! [`embed`], [`montecarlo`]).
//!
//! ```
//! use sketchreg::estimators::{fit_sketched, t_test, CovKind, EstimatorKind};
//! use sketchreg::linalg::RngStream;
//! use sketchreg::montecarlo::{gen_exogenous, DgpSpec};
//! use sketchreg::sketch::{plan_sketch, SketchKind, SketchScheme};
//!
//! let stream = RngStream::new(7, 0);
//! let data = gen_exogenous(&DgpSpec::exogenous(4096, 3, false), &mut stream.derive(0)).unwrap();
//! let plan = plan_sketch(SketchScheme::new(SketchKind::CountSketch, 256), data.n(), &stream.derive(1), None).unwrap();
//! let fit = fit_sketched(&data, &plan, EstimatorKind::Ols).unwrap();
//! let test = t_test(&fit, &[0.0, 0.0, 1.0], 1.0, CovKind::Homo).unwrap();
//! assert!(test.p_value > 0.0 && test.p_value <= 1.0);
//! ```

pub mod embed;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod montecarlo;
pub mod moments;
pub mod sketch;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/sketching.md")]
    mod sketching {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/embedding.md")]
    mod embedding {}
    #[doc = include_str!("../../../book/src/simulations.md")]
    mod simulations {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
