//! Dense linear-algebra kernels shared by every other module.
//!
//! All arithmetic is `f64`. Functions are pure; callers parallelize across
//! layers.

mod matrix;
mod projection;
mod spectral;
mod svd;

pub use matrix::Matrix;
pub use projection::{
    orthonormality_defect, project_col_complement, project_row_complement, ORTHONORMAL_TOL,
};
pub use spectral::{
    frobenius_norm, spectral_norm, stable_rank, DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL,
};
pub use svd::{truncated_svd, truncated_svd_with, SvdOptions, TruncatedSvd};
