//! Reference computations for the test suites.
//!
//! Everything here is written against plain row-major `Vec<f64>` storage and
//! shares no code with the `deltascope` implementation: eigenpairs come from a
//! cyclic Jacobi sweep, projectors are materialized densely, and derivatives are
//! taken by central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn t(&self) -> Dense {
        let mut out = Dense::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.at(i, j));
            }
        }
        out
    }

    pub fn mul(&self, other: &Dense) -> Dense {
        assert_eq!(self.cols, other.rows, "inner dimensions");
        let mut out = Dense::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.at(i, p);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.at(p, j);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Dense) -> Dense {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Dense) -> Dense {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Dense {
        Dense::new(self.rows, self.cols, self.data.iter().map(|v| v * c).collect())
    }

    fn zip(&self, other: &Dense, f: impl Fn(f64, f64) -> f64) -> Dense {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Dense::new(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        )
    }

    pub fn fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Dense) -> f64 {
        self.sub(other).data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// First `n` columns.
    pub fn leading_cols(&self, n: usize) -> Dense {
        let mut out = Dense::zeros(self.rows, n);
        for i in 0..self.rows {
            for j in 0..n {
                out.set(i, j, self.at(i, j));
            }
        }
        out
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Dense {
    Dense::new(
        rows,
        cols,
        (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect(),
    )
}

/// Random `n × t` matrix with orthonormal columns (modified Gram-Schmidt).
pub fn orthonormal(rng: &mut ChaCha8Rng, n: usize, t: usize) -> Dense {
    assert!(t <= n);
    let g = gaussian(rng, n, t);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(t);
    for j in 0..t {
        let mut v: Vec<f64> = (0..n).map(|i| g.at(i, j)).collect();
        for _ in 0..2 {
            for q in &cols {
                let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    let mut out = Dense::zeros(n, t);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            out.set(i, j, c[i]);
        }
    }
    out
}

/// Random shape with both sides in `lo..=hi`.
pub fn shape(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> (usize, usize) {
    (rng.random_range(lo..=hi), rng.random_range(lo..=hi))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in non-increasing order and the matching eigenvectors
/// as columns.
pub fn jacobi_eigen(sym: &Dense) -> (Vec<f64>, Dense) {
    let n = sym.rows;
    assert_eq!(n, sym.cols);
    let mut a = sym.clone();
    let mut v = Dense::identity(n);
    let scale = a.fro().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.at(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.at(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.at(k, p);
                    let akq = a.at(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.at(p, k);
                    let aqk = a.at(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.at(j, j).total_cmp(&a.at(i, i)));
    let values = order.iter().map(|&i| a.at(i, i)).collect();
    let mut vecs = Dense::zeros(n, n);
    for (c, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs.set(r, c, v.at(r, src));
        }
    }
    (values, vecs)
}

/// Singular structure of `m` from the eigendecompositions of its two Gram
/// matrices: singular values (non-increasing, length `min(d,k)`), left and right
/// singular vectors. Vector signs are arbitrary; compare projectors.
pub struct GramSvd {
    pub s: Vec<f64>,
    pub u: Dense,
    pub v: Dense,
}

pub fn gram_svd(m: &Dense) -> GramSvd {
    let min = m.rows.min(m.cols);
    let (lam_v, v) = jacobi_eigen(&m.t().mul(m));
    let (lam_u, u) = jacobi_eigen(&m.mul(&m.t()));
    // Take σ² from the smaller Gram matrix; both agree on the nonzero part.
    let lam = if m.cols <= m.rows { &lam_v } else { &lam_u };
    let s = lam[..min].iter().map(|l| l.max(0.0).sqrt()).collect();
    GramSvd {
        s,
        u: u.leading_cols(min),
        v: v.leading_cols(min),
    }
}

/// `Q Qᵀ` for the leading `t` columns of `q`.
pub fn projector(q: &Dense, t: usize) -> Dense {
    let qt = q.leading_cols(t);
    qt.mul(&qt.t())
}

/// `I − Q Qᵀ` for the leading `t` columns of `q`.
pub fn complement(q: &Dense, t: usize) -> Dense {
    Dense::identity(q.rows).sub(&projector(q, t))
}

/// The four overlap ratios between a base `w` and an update `dw`, evaluated
/// directly from their definitions with dense top-`t` projectors.
pub fn alignment_metrics(w: &Dense, dw: &Dense, t: usize) -> [f64; 4] {
    let svd = gram_svd(w);
    let nw = w.fro();
    let nd = dw.fro();
    let m1 = w.t().mul(dw).fro() / (nw * nd);
    let m2 = projector(&svd.u, t).mul(dw).fro() / nd;
    let m3 = w.mul(&dw.t()).fro() / (nw * nd);
    let m4 = projector(&svd.v, t).mul(&dw.t()).fro() / nd;
    [m1, m2, m3, m4]
}

/// Penalty straight from its definition: `ΔW = scale·B·A`, col ratio
/// `‖WᵀΔW‖/(‖W‖‖ΔW‖)`, row ratio `‖WΔWᵀ‖/(‖W‖‖ΔW‖)`. Returns both squared
/// ratios times `beta`.
pub fn penalty_terms(w: &Dense, b: &Dense, a: &Dense, scale: f64, beta: f64) -> (f64, f64) {
    let dw = b.mul(a).scale(scale);
    let denom = w.fro() * dw.fro();
    let col = w.t().mul(&dw).fro() / denom;
    let row = w.mul(&dw.t()).fro() / denom;
    (beta * col * col, beta * row * row)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_diff_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Pass@1 by explicit enumeration: count every correct sample of every
/// question, divide each question's count by its sample count, then average.
pub fn brute_pass_at_1(records: &[Vec<bool>]) -> f64 {
    let mut total = 0.0;
    for outcomes in records {
        let mut correct = 0usize;
        for &o in outcomes {
            if o {
                correct += 1;
            }
        }
        total += correct as f64 / outcomes.len() as f64;
    }
    total / records.len() as f64
}

/// Fraction of single-verdict records whose verdict equals `want`.
pub fn brute_fraction(records: &[Vec<bool>], want: bool) -> f64 {
    let hits = records.iter().filter(|r| r[0] == want).count();
    hits as f64 / records.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let m = Dense::new(3, 3, vec![2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let (vals, vecs) = jacobi_eigen(&m);
        assert!((vals[0] - 5.0).abs() < 1e-13);
        assert!((vals[1] - 3.0).abs() < 1e-13);
        assert!((vals[2] - 1.0).abs() < 1e-13);
        let recon = vecs
            .mul(&Dense::new(3, 3, vec![5.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0]))
            .mul(&vecs.t());
        assert!(recon.max_abs_diff(&m) < 1e-13);
    }

    #[test]
    fn gram_svd_of_diagonal() {
        let m = Dense::new(2, 3, vec![3.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        let svd = gram_svd(&m);
        assert!((svd.s[0] - 4.0).abs() < 1e-13 && (svd.s[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn central_diff_of_quadratic() {
        let g = central_diff_gradient(&[1.0, -2.0], 1e-5, |x| x[0] * x[0] + 3.0 * x[1]);
        assert!((g[0] - 2.0).abs() < 1e-9 && (g[1] - 3.0).abs() < 1e-9);
    }
}
