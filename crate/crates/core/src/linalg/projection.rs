use super::Matrix;
use crate::error::{Error, Result};

/// Orthonormality slack accepted for projector bases.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// Largest entry of `|QᵀQ − I|`.
pub fn orthonormality_defect(q: &Matrix) -> f64 {
    let gram = q.tr_mul(q);
    let n = gram.rows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram.get(i, j) - target).abs());
        }
    }
    worst
}

fn check_basis(basis: &Matrix) -> Result<()> {
    let deviation = orthonormality_defect(basis);
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// `(I − UUᵀ)M`, computed as `M − U(UᵀM)`.
pub fn project_col_complement(m: &Matrix, u: &Matrix) -> Result<Matrix> {
    if u.rows() != m.rows() {
        return Err(Error::shape(
            "column-space projector",
            (m.rows(), u.cols()),
            u.shape(),
        ));
    }
    check_basis(u)?;
    Ok(m - &(u * &u.tr_mul(m)))
}

/// `M(I − VVᵀ)`, computed as `M − (MV)Vᵀ`.
pub fn project_row_complement(m: &Matrix, v: &Matrix) -> Result<Matrix> {
    if v.rows() != m.cols() {
        return Err(Error::shape(
            "row-space projector",
            (m.cols(), v.cols()),
            v.shape(),
        ));
    }
    check_basis(v)?;
    Ok(m - &(m * v).mul_tr(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col_complement_kills_first_row() {
        let u = Matrix::from_rows(&[[1.0], [0.0]]);
        let m = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let p = project_col_complement(&m, &u).unwrap();
        assert_eq!(p, Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]));
    }

    #[test]
    fn row_complement_kills_first_column() {
        let v = Matrix::from_rows(&[[1.0], [0.0]]);
        let m = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let p = project_row_complement(&m, &v).unwrap();
        assert_eq!(p, Matrix::from_rows(&[[0.0, 1.0], [0.0, 1.0]]));
    }

    #[test]
    fn fixed_points() {
        let u = Matrix::from_rows(&[[1.0], [0.0], [0.0]]);
        let m = Matrix::from_rows(&[[0.0, 0.0], [2.0, -1.0], [3.0, 5.0]]);
        assert_eq!(project_col_complement(&m, &u).unwrap(), m);
        let v = Matrix::from_rows(&[[0.0], [1.0]]);
        let m = Matrix::from_rows(&[[4.0, 0.0], [-2.0, 0.0]]);
        assert_eq!(project_row_complement(&m, &v).unwrap(), m);
    }

    #[test]
    fn errors() {
        let m = Matrix::zeros(3, 2);
        assert!(matches!(
            project_col_complement(&m, &Matrix::from_rows(&[[1.0], [0.0]])),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            project_col_complement(&m, &Matrix::from_rows(&[[2.0], [0.0], [0.0]])),
            Err(Error::NotOrthonormal { .. })
        ));
        assert!(matches!(
            project_row_complement(&m, &Matrix::from_rows(&[[1.0], [0.0], [0.0]])),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
