use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;
use crate::error::{Error, Result};

/// Components below this magnitude are skipped when fixing singular vector signs.
const SIGN_EPS: f64 = 1e-10;

/// Knobs for [`truncated_svd_with`].
#[derive(Debug, Clone)]
pub struct SvdOptions {
    /// Matrices with `min(d, k)` up to this size use the full dense decomposition.
    pub dense_limit: usize,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            dense_limit: 512,
            oversample: 8,
            power_iters: 4,
            seed: 0x5bd1_e995,
        }
    }
}

/// Top singular triplets of a matrix: `M ≈ U · diag(S) · Vᵀ`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    u: Matrix,
    s: Vec<f64>,
    v: Matrix,
}

impl TruncatedSvd {
    /// Left singular vectors, `d × t`.
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    /// Singular values, non-increasing.
    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// Right singular vectors, `k × t`.
    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Keeps only the leading `t` triplets. The result is the rank-`t`
    /// truncation of the same decomposition, so repeated calls with smaller `t`
    /// agree with each other.
    pub fn truncate(&self, t: usize) -> Result<TruncatedSvd> {
        if t == 0 || t > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate rank-{} decomposition to {t}",
                self.rank()
            )));
        }
        Ok(TruncatedSvd {
            u: self.u.leading_columns(t),
            s: self.s[..t].to_vec(),
            v: self.v.leading_columns(t),
        })
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.as_dmatrix().clone();
        for (j, &sigma) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sigma);
        }
        Matrix::wrap(us * self.v.as_dmatrix().transpose())
    }
}

/// Top-`t` singular triplets with the default [`SvdOptions`].
pub fn truncated_svd(m: &Matrix, t: usize) -> Result<TruncatedSvd> {
    truncated_svd_with(m, t, &SvdOptions::default())
}

/// Top-`t` singular triplets.
///
/// Uses a full Golub-Kahan decomposition when `min(d, k) <= dense_limit`,
/// randomized subspace iteration otherwise. Each left singular vector is
/// flipped so that its first non-negligible component is positive, with the
/// matching right vector flipped alongside it.
pub fn truncated_svd_with(m: &Matrix, t: usize, opts: &SvdOptions) -> Result<TruncatedSvd> {
    let min_dim = m.min_dim();
    if t == 0 || t > min_dim {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {t} outside 1..={min_dim} for {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let (mut u, s, mut v) = if min_dim <= opts.dense_limit {
        dense_top(m.as_dmatrix(), t)?
    } else {
        randomized_top(m.as_dmatrix(), t, opts)?
    };
    fix_signs(&mut u, &mut v);
    Ok(TruncatedSvd {
        u: Matrix::wrap(u),
        s,
        v: Matrix::wrap(v),
    })
}

type Triplets = (DMatrix<f64>, Vec<f64>, DMatrix<f64>);

/// Relative backward error `‖A − UΣVᵀ‖_F / ‖A‖_F` accepted without retrying.
const BACKWARD_TOL: f64 = 1e-12;
/// Largest backward error accepted at all.
const BACKWARD_MAX: f64 = 1e-8;

type FullSvd = nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>;

// The Golub-Kahan iteration sometimes converges to inaccurate singular
// vectors, or wrong singular values on rank-deficient input, depending on
// its threshold. Each attempt is checked by recomposition.
fn dense_full(a: &DMatrix<f64>) -> Result<FullSvd> {
    let norm = a.norm();
    let mut best: Option<(f64, FullSvd)> = None;
    for eps in [5.0 * f64::EPSILON, 50.0 * f64::EPSILON, 500.0 * f64::EPSILON] {
        let Some(svd) = a.clone().try_svd(true, true, eps, 0) else {
            continue;
        };
        let err = backward_error(a, &svd, norm);
        if err <= BACKWARD_TOL {
            return Ok(svd);
        }
        log::debug!("dense SVD backward error {err:e} at eps {eps:e}");
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, svd));
        }
    }
    match best {
        Some((err, svd)) if err <= BACKWARD_MAX => Ok(svd),
        other => Err(Error::NotConverged {
            what: "dense SVD",
            iterations: 3,
            estimate: f64::NAN,
            residual: other.map_or(f64::NAN, |(e, _)| e),
        }),
    }
}

fn backward_error(a: &DMatrix<f64>, svd: &FullSvd, norm: f64) -> f64 {
    if norm == 0.0 {
        return 0.0;
    }
    let (Some(u), Some(vt)) = (&svd.u, &svd.v_t) else {
        return f64::INFINITY;
    };
    let mut us = u.clone();
    for (j, s) in svd.singular_values.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    (a - us * vt).norm() / norm
}

fn dense_top(a: &DMatrix<f64>, t: usize) -> Result<Triplets> {
    let svd = dense_full(a)?;
    let u_all = svd.u.expect("requested U");
    let vt_all = svd.v_t.expect("requested Vᵀ");
    let sigma = svd.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    order.truncate(t);

    let u = DMatrix::from_fn(a.nrows(), t, |r, c| u_all[(r, order[c])]);
    let v = DMatrix::from_fn(a.ncols(), t, |r, c| vt_all[(order[c], r)]);
    let s = order.iter().map(|&i| sigma[i].max(0.0)).collect();
    Ok((u, s, v))
}

fn randomized_top(a: &DMatrix<f64>, t: usize, opts: &SvdOptions) -> Result<Triplets> {
    let (d, k) = a.shape();
    let width = (t + opts.oversample).min(d.min(k));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(k, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = (a * omega).qr().q();
    for _ in 0..opts.power_iters {
        let z = a.tr_mul(&q).qr().q();
        q = (a * z).qr().q();
    }
    let small = q.tr_mul(a);
    let (ub, s, v) = dense_top(&small, t)?;
    let u = q * ub;
    Ok((u, s, v))
}

fn fix_signs(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        let flip = u
            .column(j)
            .iter()
            .find(|x| x.abs() > SIGN_EPS)
            .is_some_and(|&x| x < 0.0);
        if flip {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_col_close(m: &Matrix, j: usize, expected: &[f64]) {
        for (i, &e) in expected.iter().enumerate() {
            assert!((m.get(i, j) - e).abs() < 1e-12, "entry ({i},{j})");
        }
    }

    #[test]
    fn diagonal_case() {
        let svd = truncated_svd(&Matrix::diag(&[3.0, 2.0, 1.0]), 2).unwrap();
        assert_eq!(svd.rank(), 2);
        assert!((svd.s()[0] - 3.0).abs() < 1e-12 && (svd.s()[1] - 2.0).abs() < 1e-12);
        assert_col_close(svd.u(), 0, &[1.0, 0.0, 0.0]);
        assert_col_close(svd.u(), 1, &[0.0, 1.0, 0.0]);
        assert_col_close(svd.v(), 0, &[1.0, 0.0, 0.0]);
        assert_col_close(svd.v(), 1, &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn rank_one_case() {
        let m = Matrix::from_rows(&[[0.0, 2.0], [0.0, 0.0]]);
        let svd = truncated_svd(&m, 1).unwrap();
        assert!((svd.s()[0] - 2.0).abs() < 1e-12);
        assert_col_close(svd.u(), 0, &[1.0, 0.0]);
        assert_col_close(svd.v(), 0, &[0.0, 1.0]);
    }

    #[test]
    fn sign_convention_applied() {
        let m = Matrix::from_rows(&[[-4.0, 0.0], [0.0, -1.0]]);
        let svd = truncated_svd(&m, 2).unwrap();
        for j in 0..2 {
            let first = (0..2).map(|i| svd.u().get(i, j)).find(|x| x.abs() > SIGN_EPS);
            assert!(first.unwrap() > 0.0);
        }
        assert!(svd.reconstruct().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn rank_out_of_range() {
        let m = Matrix::identity(3);
        assert!(truncated_svd(&m, 0).is_err());
        assert!(truncated_svd(&m, 4).is_err());
    }

    #[test]
    fn truncate_prefix() {
        let m = Matrix::diag(&[5.0, 4.0, 3.0, 2.0]);
        let full = truncated_svd(&m, 4).unwrap();
        let two = full.truncate(2).unwrap();
        assert_eq!(two.s(), &full.s()[..2]);
        assert!(full.truncate(5).is_err());
    }
}
