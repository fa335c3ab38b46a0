use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Regression samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Matrix,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::shape("dataset rows", (x.rows(), x.cols()), (y.rows(), y.cols())));
        }
        Ok(Self { x, y })
    }

    /// `n × d_in`
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    /// `n × d_out`
    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn rows(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = self.x.as_dmatrix().select_rows(idx);
        let y = self.y.as_dmatrix().select_rows(idx);
        (x, y)
    }
}

/// `x ↦ W2 · tanh(W1 · x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    w1: Matrix,
    w2: Matrix,
}

/// Layer sizes `(d_in, h, d_out)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims(pub usize, pub usize, pub usize);

impl ToyModel {
    /// `w1` is `h × d_in`, `w2` is `d_out × h`.
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self> {
        if w2.cols() != w1.rows() {
            return Err(Error::shape("second layer", (w2.rows(), w1.rows()), w2.shape()));
        }
        if !w1.is_finite() || !w2.is_finite() {
            return Err(Error::NonFinite("toy model weights".into()));
        }
        Ok(Self { w1, w2 })
    }

    pub(crate) fn unchecked(w1: DMatrix<f64>, w2: DMatrix<f64>) -> Self {
        Self { w1: Matrix::wrap(w1), w2: Matrix::wrap(w2) }
    }

    /// Gaussian weights scaled by `1/√fan_in`.
    pub fn random(rng: &mut impl Rng, dims: Dims) -> Self {
        let Dims(d_in, h, d_out) = dims;
        let w1 = gaussian(rng, h, d_in, 1.0 / (d_in as f64).sqrt());
        let w2 = gaussian(rng, d_out, h, 1.0 / (h as f64).sqrt());
        Self { w1, w2 }
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    pub fn dims(&self) -> Dims {
        Dims(self.w1.cols(), self.w1.rows(), self.w2.rows())
    }

    /// Outputs for every row of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.w1.cols() {
            return Err(Error::shape("toy input", (x.rows(), self.w1.cols()), x.shape()));
        }
        let h = hidden(x.as_dmatrix(), self.w1.as_dmatrix());
        Ok(Matrix::wrap(h * self.w2.as_dmatrix().transpose()))
    }

    /// `½ · mean over samples of ‖ŷ − y‖²`.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        if data.y.cols() != self.w2.rows() {
            return Err(Error::shape("toy targets", (data.len(), self.w2.rows()), data.y.shape()));
        }
        if data.is_empty() {
            return Ok(0.0);
        }
        let err = self.forward(&data.x)?.into_dmatrix() - data.y.as_dmatrix();
        Ok(0.5 * err.norm_squared() / data.len() as f64)
    }
}

pub(crate) fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let normal = Normal::new(0.0, std).expect("positive std");
    Matrix::wrap(DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng)))
}

pub(crate) fn hidden(x: &DMatrix<f64>, w1: &DMatrix<f64>) -> DMatrix<f64> {
    (x * w1.transpose()).map(f64::tanh)
}

/// Loss on a batch and its gradients with respect to `W1` and `W2`.
pub(crate) fn loss_grads(
    w1: &DMatrix<f64>,
    w2: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let h = hidden(x, w1);
    let err = &h * w2.transpose() - y;
    let loss = 0.5 * err.norm_squared() / n;
    let e = err / n;
    let g2 = e.transpose() * &h;
    let dz = (&e * w2).component_mul(&h.map(|t| 1.0 - t * t));
    let g1 = dz.transpose() * x;
    (loss, g1, g2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(ToyModel::new(Matrix::zeros(3, 2), Matrix::zeros(1, 4)).is_err());
        let m = ToyModel::new(Matrix::zeros(3, 2), Matrix::zeros(1, 3)).unwrap();
        assert_eq!(m.dims(), Dims(2, 3, 1));
        assert!(m.forward(&Matrix::zeros(5, 3)).is_err());
        assert!(Dataset::new(Matrix::zeros(2, 2), Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn loss_of_zero_model() {
        let m = ToyModel::new(Matrix::identity(2), Matrix::zeros(1, 2)).unwrap();
        let data = Dataset::new(Matrix::identity(2), Matrix::from_rows(&[[2.0], [0.0]])).unwrap();
        assert_eq!(m.loss(&data).unwrap(), 1.0);
    }
}
