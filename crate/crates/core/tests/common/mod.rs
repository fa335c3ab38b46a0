#![allow(dead_code)]

use deltascope::Matrix;
use deltascope_oracle::Dense;

pub fn to_dense(m: &Matrix) -> Dense {
    Dense::new(m.rows(), m.cols(), m.to_row_major())
}

pub fn to_matrix(d: &Dense) -> Matrix {
    Matrix::from_row_major(d.rows, d.cols, &d.data).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
