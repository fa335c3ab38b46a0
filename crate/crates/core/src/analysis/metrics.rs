use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, truncated_svd, Matrix, TruncatedSvd};

/// Overlap between an update `ΔW` and base weights `W_I`.
///
/// * `m1 = ‖W_Iᵀ ΔW‖ / (‖W_I‖ ‖ΔW‖)`, column space
/// * `m2 = ‖U_t U_tᵀ ΔW‖ / ‖ΔW‖`, column space, top-`t` left singular subspace
/// * `m3 = ‖W_I ΔWᵀ‖ / (‖W_I‖ ‖ΔW‖)`, row space
/// * `m4 = ‖V_t V_tᵀ ΔWᵀ‖ / ‖ΔW‖`, row space, top-`t` right singular subspace
///
/// All norms are Frobenius. Each value lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMetrics {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl AlignmentMetrics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.m1, self.m2, self.m3, self.m4]
    }
}

/// Default subspace size for `m2` / `m4`.
pub const DEFAULT_TOP_T: usize = 16;

pub fn alignment_metrics(base: &Matrix, delta: &Matrix, top_t: usize) -> Result<AlignmentMetrics> {
    check_inputs(base, delta)?;
    let min_dim = base.min_dim();
    if top_t == 0 || top_t > min_dim {
        return Err(Error::InvalidArgument(format!(
            "top_t {top_t} outside 1..={min_dim}"
        )));
    }
    let svd = truncated_svd(base, top_t)?;
    alignment_metrics_with_svd(base, delta, &svd)
}

/// Same as [`alignment_metrics`] with a precomputed decomposition of `base`;
/// its rank is the subspace size used for `m2` / `m4`.
pub fn alignment_metrics_with_svd(
    base: &Matrix,
    delta: &Matrix,
    svd: &TruncatedSvd,
) -> Result<AlignmentMetrics> {
    check_inputs(base, delta)?;
    if svd.u().rows() != base.rows() || svd.v().rows() != base.cols() {
        return Err(Error::shape(
            "base decomposition",
            base.shape(),
            (svd.u().rows(), svd.v().rows()),
        ));
    }
    let nb = frobenius_norm(base);
    let nd = frobenius_norm(delta);
    // U has orthonormal columns, so ‖UUᵀΔ‖ = ‖UᵀΔ‖ and ‖VVᵀΔᵀ‖ = ‖ΔV‖.
    let m1 = frobenius_norm(&base.tr_mul(delta)) / (nb * nd);
    let m2 = frobenius_norm(&svd.u().tr_mul(delta)) / nd;
    let m3 = frobenius_norm(&base.mul_tr(delta)) / (nb * nd);
    let m4 = frobenius_norm(&(delta * svd.v())) / nd;
    Ok(AlignmentMetrics { m1, m2, m3, m4 })
}

fn check_inputs(base: &Matrix, delta: &Matrix) -> Result<()> {
    base.ensure_same_shape(delta, "alignment metrics")?;
    if base.is_zero() {
        return Err(Error::ZeroMatrix("base weight".into()));
    }
    if delta.is_zero() {
        return Err(Error::ZeroMatrix("update".into()));
    }
    Ok(())
}
