//! Dense kernels: matrices, QR and SVD, fast transforms, random streams and
//! normal-distribution helpers.

mod matrix;
mod normal;
mod qr;
mod rng;
mod svd;
mod transforms;

pub use matrix::{dot, norm2, Matrix};
pub use normal::{chi_square_sf, normal_cdf, normal_quantile, normal_two_sided_p};
pub use qr::{qr_solve, Qr, RANK_TOL};
pub use rng::{mvn_ar1, mvn_ar1_into, RngStream};
pub(crate) use rng::bucket;
pub use svd::{spectral_norm, thin_svd, ThinSvd, JACOBI_SWEEP_CAP, POWER_ITER_CAP};
pub use transforms::{fwht_in_place, fwht_normalized, real_dft, RealDft};
