use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix in 64-bit precision.
///
/// Storage is delegated to [`nalgebra::DMatrix`]; the logical layout exposed
/// through [`Matrix::from_row_major`] and [`Matrix::to_row_major`] is row-major,
/// which is what the tensor container uses on disk.
#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Builds a `rows × cols` matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data".into()));
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, data)))
    }

    /// Builds a matrix from nested rows. Panics on ragged or empty input; meant
    /// for literals in code and tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        assert!(n_rows > 0, "at least one row required");
        let n_cols = rows[0].as_ref().len();
        let flat: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.as_ref().len(), n_cols, "ragged rows");
                r.as_ref().iter().copied()
            })
            .collect();
        Self::from_row_major(n_rows, n_cols, &flat).expect("valid literal matrix")
    }

    /// Wraps an existing nalgebra matrix, checking the positive-shape and
    /// finiteness invariants.
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidArgument("matrix dimensions must be positive".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data".into()));
        }
        Ok(Self(m))
    }

    /// Wraps without checks. Callers guarantee a positive shape.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() > 0 && m.ncols() > 0);
        Self(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "matrix dimensions must be positive");
        Self(DMatrix::identity(n, n))
    }

    pub fn diag(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "diagonal must be nonempty");
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self(DMatrix::from_fn(rows, cols, f))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    #[inline]
    pub fn min_dim(&self) -> usize {
        self.rows().min(self.cols())
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.0[(row, col)] = value;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn tr_mul(&self, other: &Matrix) -> Self {
        Self(self.0.tr_mul(&other.0))
    }

    /// `self · otherᵀ`.
    pub fn mul_tr(&self, other: &Matrix) -> Self {
        Self(&self.0 * other.0.transpose())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(Error::shape(
                "matrix product",
                (self.cols(), other.cols()),
                other.shape(),
            ));
        }
        Ok(Self(&self.0 * &other.0))
    }

    pub fn checked_add(&self, other: &Matrix) -> Result<Self> {
        self.ensure_same_shape(other, "matrix sum")?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn checked_sub(&self, other: &Matrix) -> Result<Self> {
        self.ensure_same_shape(other, "matrix difference")?;
        Ok(Self(&self.0 - &other.0))
    }

    pub(crate) fn ensure_same_shape(&self, other: &Matrix, context: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(context, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Frobenius inner product `⟨self, other⟩ = Σ aᵢⱼ bᵢⱼ`.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }

    /// Column `j` as an owned `rows × 1` matrix.
    pub fn column(&self, j: usize) -> Self {
        Self(self.0.columns(j, 1).into_owned())
    }

    /// Leading `n` columns.
    pub fn leading_columns(&self, n: usize) -> Self {
        Self(self.0.columns(0, n).into_owned())
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.shape())?;
        if self.rows() * self.cols() <= 64 {
            write!(f, " {}", self.0)?;
        }
        Ok(())
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    /// Panics on shape mismatch; use [`Matrix::checked_add`] for fallible input.
    fn add(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 + &rhs.0)
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 - &rhs.0)
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 * &rhs.0)
    }
}
