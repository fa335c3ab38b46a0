//! Orthogonality penalties on adapter updates and their gradients with
//! respect to the adapter factors.
//!
//! With `ΔW = (α/r)·B·A`, base weights `W̃` (usually a low-rank
//! approximation of `W_I`) and Frobenius norms throughout:
//!
//! * col: `β·(‖W̃ᵀΔW‖ / (‖W̃‖‖ΔW‖))²`
//! * both: col plus `β·(‖W̃ΔWᵀ‖ / (‖W̃‖‖ΔW‖))²`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::AdapterPair;
use crate::linalg::{frobenius_norm, truncated_svd, Matrix};

pub const DEFAULT_BASE_RANK: usize = 64;
pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyVariant {
    Col,
    Both,
}

impl std::str::FromStr for PenaltyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "col" => Ok(PenaltyVariant::Col),
            "both" => Ok(PenaltyVariant::Both),
            other => Err(Error::InvalidArgument(format!("unknown penalty variant {other:?}"))),
        }
    }
}

/// Which base matrix the penalty compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseApprox {
    /// Best rank-`m` approximation of the base weights.
    Rank(usize),
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub variant: PenaltyVariant,
    pub beta: f64,
    pub base_approx: BaseApprox,
    /// Norms at or below this are treated as zero.
    pub eps: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            variant: PenaltyVariant::Col,
            beta: 1.0,
            base_approx: BaseApprox::Rank(DEFAULT_BASE_RANK),
            eps: DEFAULT_EPS,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {}", self.eps)));
        }
        if self.base_approx == BaseApprox::Rank(0) {
            return Err(Error::InvalidArgument("base approximation rank must be at least 1".into()));
        }
        Ok(())
    }

    /// The matrix `W̃` to pass to the penalty functions. A rank above
    /// `min(d, k)` is lowered to it.
    pub fn base_for(&self, base: &Matrix) -> Result<Matrix> {
        self.validate()?;
        match self.base_approx {
            BaseApprox::Exact => Ok(base.clone()),
            BaseApprox::Rank(m) => low_rank_base(base, m.min(base.min_dim())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyResult {
    pub value: f64,
    /// `d × r`
    pub grad_b: Matrix,
    /// `r × k`
    pub grad_a: Matrix,
}

/// `U_m·diag(S_m)·V_mᵀ`, the best rank-`m` approximation of `base`.
pub fn low_rank_base(base: &Matrix, m: usize) -> Result<Matrix> {
    let min_dim = base.min_dim();
    if m == 0 || m > min_dim {
        return Err(Error::InvalidArgument(format!("approximation rank {m} outside 1..={min_dim}")));
    }
    Ok(truncated_svd(base, m)?.reconstruct())
}

/// Norms and products shared by the value and the gradient.
struct Terms {
    nb2: f64,
    nd2: f64,
    col2: f64,
    row2: f64,
}

fn terms(base: &Matrix, delta: &Matrix, variant: PenaltyVariant, eps: f64) -> Result<(Terms, Matrix, Option<Matrix>)> {
    base.ensure_same_shape(delta, "penalty")?;
    let nb = frobenius_norm(base);
    let nd = frobenius_norm(delta);
    if nb <= eps {
        return Err(Error::ZeroMatrix("base weight".into()));
    }
    if nd <= eps {
        return Err(Error::ZeroMatrix("adapter update (all-zero adapter)".into()));
    }
    let wt_d = base.tr_mul(delta);
    let col2 = frobenius_norm(&wt_d).powi(2);
    // ‖W̃ΔWᵀ‖² = ⟨ΔW, ΔW·W̃ᵀW̃⟩ keeps every product at d × k or smaller.
    let (row2, row_dir) = match variant {
        PenaltyVariant::Col => (0.0, None),
        PenaltyVariant::Both => {
            let d_wtw = delta * &base.tr_mul(base);
            (delta.dot(&d_wtw).max(0.0), Some(d_wtw))
        }
    };
    let col_dir = base * &wt_d;
    Ok((Terms { nb2: nb * nb, nd2: nd * nd, col2, row2 }, col_dir, row_dir))
}

fn value_from(t: &Terms, beta: f64) -> f64 {
    beta * (t.col2 + t.row2) / (t.nb2 * t.nd2)
}

/// Penalty of a dense update `ΔW` against `W̃`.
pub fn penalty_value_dense(base: &Matrix, delta: &Matrix, cfg: &PenaltyConfig) -> Result<f64> {
    cfg.validate()?;
    let (t, _, _) = terms(base, delta, cfg.variant, cfg.eps)?;
    Ok(value_from(&t, cfg.beta))
}

/// Penalty value and its gradient with respect to a dense `ΔW`.
pub fn penalty_grad_dense(base: &Matrix, delta: &Matrix, cfg: &PenaltyConfig) -> Result<(f64, Matrix)> {
    cfg.validate()?;
    let (t, col_dir, row_dir) = terms(base, delta, cfg.variant, cfg.eps)?;
    // d/dΔ of β‖X(Δ)‖²/(‖W̃‖²‖Δ‖²) is (2β/‖W̃‖²)·(D‖Δ‖² − ‖X‖²Δ)/‖Δ‖⁴ with
    // D = W̃W̃ᵀΔ for the col term and ΔW̃ᵀW̃ for the row term.
    let mut num = col_dir.scale(t.nd2);
    if let Some(row_dir) = row_dir {
        num = &num + &row_dir.scale(t.nd2);
    }
    let num = &num - &delta.scale(t.col2 + t.row2);
    let grad = num.scale(2.0 * cfg.beta / (t.nb2 * t.nd2 * t.nd2));
    Ok((value_from(&t, cfg.beta), grad))
}

pub fn penalty_value(base: &Matrix, pair: &AdapterPair, cfg: &PenaltyConfig) -> Result<f64> {
    penalty_value_dense(base, &pair.delta(), cfg)
}

/// Value plus gradients with respect to `B` and `A`.
pub fn penalty_grads(base: &Matrix, pair: &AdapterPair, cfg: &PenaltyConfig) -> Result<PenaltyResult> {
    let (value, g) = penalty_grad_dense(base, &pair.delta(), cfg)?;
    let s = pair.scaling();
    Ok(PenaltyResult {
        value,
        grad_b: g.mul_tr(pair.a()).scale(s),
        grad_a: pair.b().tr_mul(&g).scale(s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(b: Matrix, a: Matrix) -> AdapterPair {
        let r = a.rows() as f64;
        AdapterPair::new("w", b, a, r).unwrap()
    }

    fn col() -> PenaltyConfig {
        PenaltyConfig { base_approx: BaseApprox::Exact, ..PenaltyConfig::default() }
    }

    #[test]
    fn orthogonal_columns_give_zero() {
        let w = Matrix::from_rows(&[[1.0], [0.0]]);
        let p = pair(Matrix::from_rows(&[[0.0], [1.0]]), Matrix::from_rows(&[[1.0]]));
        assert_eq!(penalty_value(&w, &p, &col()).unwrap(), 0.0);
        let g = penalty_grads(&w, &p, &col()).unwrap();
        assert!(g.grad_b.is_zero() && g.grad_a.is_zero());
    }

    #[test]
    fn identity_base_gives_beta_over_n() {
        let p = pair(
            Matrix::from_rows(&[[1.0, 0.5], [0.0, 2.0], [3.0, -1.0]]),
            Matrix::from_rows(&[[0.2, 0.0, 1.0], [1.0, 1.0, 0.0]]),
        );
        let v = penalty_value(&Matrix::identity(3), &p, &col()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_adapter_is_an_error() {
        let p = pair(Matrix::zeros(2, 1), Matrix::from_rows(&[[1.0, 1.0]]));
        assert!(matches!(
            penalty_value(&Matrix::identity(2), &p, &col()),
            Err(Error::ZeroMatrix(_))
        ));
    }

    #[test]
    fn low_rank_base_range() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [0.5, 1.0]]);
        assert!(low_rank_base(&w, 0).is_err());
        assert!(low_rank_base(&w, 3).is_err());
        assert!(low_rank_base(&w, 1).unwrap().max_abs_diff(&w) < 1e-12);
    }

    #[test]
    fn config_checks() {
        assert!(PenaltyConfig { beta: 0.0, ..PenaltyConfig::default() }.validate().is_err());
        assert!(PenaltyConfig { base_approx: BaseApprox::Rank(0), ..PenaltyConfig::default() }
            .validate()
            .is_err());
        let w = Matrix::diag(&[3.0, 2.0, 1.0]);
        let approx = PenaltyConfig::default().base_for(&w).unwrap();
        assert!(approx.max_abs_diff(&w) < 1e-12);
    }
}
