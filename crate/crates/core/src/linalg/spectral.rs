use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;
use crate::error::{Error, Result};

/// Relative-change tolerance used when callers do not supply one.
pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITER: usize = 1000;

/// Block width of the subspace power iteration. Widths above one make the
/// convergence rate depend on σ_{p+1}/σ_1 instead of σ_2/σ_1, so a near-tie at
/// the top of the spectrum does not stall the estimate.
const BLOCK: usize = 8;
const START_SEED: u64 = 0x5eed_0001;

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.as_dmatrix().norm()
}

/// Largest singular value of `m` by power iteration on the smaller Gram
/// matrix (`MᵀM` or `MMᵀ`).
///
/// Iterates a small orthonormal block, extracting the top Ritz value with a
/// Rayleigh-Ritz step each round, and stops once the relative change of the
/// estimate of σ₁² drops below `tol`.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if m.is_zero() {
        return Err(Error::ZeroMatrix("matrix passed to spectral_norm".into()));
    }
    let a = m.as_dmatrix();
    let gram = if a.ncols() <= a.nrows() {
        a.tr_mul(a)
    } else {
        a * a.transpose()
    };
    let n = gram.nrows();
    let p = BLOCK.min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let start = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let mut q = start.qr().q();

    let mut prev = f64::NAN;
    let mut theta = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let z = &gram * &q;
        let h = q.tr_mul(&z);
        let h = (&h + h.transpose()) * 0.5;
        let eig = h.symmetric_eigen();
        let (top, &value) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("block is nonempty");
        theta = value;
        let ritz = &q * eig.eigenvectors.column(top);
        residual = (&gram * &ritz - &ritz * theta).norm();

        if theta <= 0.0 {
            // Start block orthogonal to the range; cannot happen for a nonzero
            // matrix with a Gaussian start, but guard against a zero estimate.
            break;
        }
        if (theta - prev).abs() <= tol * theta || residual <= f64::EPSILON * theta {
            return Ok(theta.sqrt());
        }
        prev = theta;
        q = z.qr().q();
    }
    Err(Error::NotConverged {
        what: "spectral norm power iteration",
        iterations: max_iter,
        estimate: theta.max(0.0).sqrt(),
        residual,
    })
}

/// `‖M‖_F² / ‖M‖₂²`, in `[1, min(d, k)]` for nonzero `M`.
pub fn stable_rank(m: &Matrix) -> Result<f64> {
    if m.is_zero() {
        return Err(Error::ZeroMatrix("matrix passed to stable_rank".into()));
    }
    let sigma = spectral_norm(m, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)?;
    let fro = frobenius_norm(m);
    Ok((fro * fro) / (sigma * sigma))
}
