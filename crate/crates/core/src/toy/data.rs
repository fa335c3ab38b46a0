use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{gaussian, Dataset, Dims, ToyModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Size of the rank-1 change separating the two teachers.
pub const PERTURBATION_SCALE: f64 = 3.0;

/// Two regression tasks whose teachers differ by a rank-1 change of `W1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTasks {
    pub task_a: Dataset,
    pub task_b: Dataset,
    pub teacher_a: ToyModel,
    pub teacher_b: ToyModel,
}

/// Task A: a random dense teacher, queried on inputs orthogonal to the
/// perturbation's input direction. Task B: the same teacher plus
/// `PERTURBATION_SCALE · u vᵀ` on `W1`, queried on isotropic inputs.
pub fn gen_interference_tasks(seed: u64, dims: Dims, n_samples: usize) -> Result<InterferenceTasks> {
    let Dims(d_in, h, d_out) = dims;
    if d_in == 0 || h == 0 || d_out == 0 {
        return Err(Error::InvalidArgument(format!("toy dims must be positive, got {dims:?}")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher_a = ToyModel::random(&mut rng, dims);
    let u = unit(gaussian(&mut rng, h, 1, 1.0));
    let v = unit(gaussian(&mut rng, d_in, 1, 1.0));
    let w1_b = teacher_a.w1() + &u.mul_tr(&v).scale(PERTURBATION_SCALE);
    let teacher_b = ToyModel::new(w1_b, teacher_a.w2().clone())?;

    let raw_a = gaussian(&mut rng, n_samples, d_in, 1.0);
    let x_a = {
        let vd = v.as_dmatrix();
        let coeff: DMatrix<f64> = raw_a.as_dmatrix() * vd;
        Matrix::wrap(raw_a.as_dmatrix() - coeff * vd.transpose())
    };
    let x_b = gaussian(&mut rng, n_samples, d_in, 1.0);
    let y_a = teacher_a.forward(&x_a)?;
    let y_b = teacher_b.forward(&x_b)?;
    Ok(InterferenceTasks {
        task_a: Dataset::new(x_a, y_a)?,
        task_b: Dataset::new(x_b, y_b)?,
        teacher_a,
        teacher_b,
    })
}

fn unit(m: Matrix) -> Matrix {
    let n = m.as_dmatrix().norm();
    m.scale(1.0 / n)
}
