use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{loss_grads, Dataset, ToyModel};
use crate::error::{Error, Result};
use crate::io::AdapterPair;
use crate::linalg::Matrix;
use crate::penalty::{penalty_grad_dense, PenaltyConfig};

/// Learning rate of the large-model recipe the toy defaults scale from.
pub const REFERENCE_LEARNING_RATE: f64 = 5e-5;
pub const TOY_LR_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyMode {
    Full,
    Lora,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyRunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Echoed in reports; not used by training.
    pub reference_learning_rate: f64,
    pub weight_decay: f64,
    pub mode: ToyMode,
    pub rank: usize,
    pub alpha: f64,
    pub penalty: Option<PenaltyConfig>,
    /// Samples per step; 0 means the whole dataset.
    pub batch_size: usize,
    /// Cap on the global gradient norm of each step.
    pub grad_clip: Option<f64>,
}

impl Default for ToyRunConfig {
    fn default() -> Self {
        Self {
            seed: 17,
            epochs: 200,
            learning_rate: REFERENCE_LEARNING_RATE * TOY_LR_SCALE,
            reference_learning_rate: REFERENCE_LEARNING_RATE,
            weight_decay: 1e-4,
            mode: ToyMode::Lora,
            rank: 4,
            alpha: 16.0,
            penalty: None,
            batch_size: 32,
            grad_clip: Some(1.0),
        }
    }
}

impl ToyRunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.mode == ToyMode::Lora {
            if self.rank == 0 {
                return bad("rank must be at least 1".into());
            }
            if !(self.alpha > 0.0 && self.alpha.is_finite()) {
                return bad(format!("alpha must be positive, got {}", self.alpha));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        if let Some(p) = &self.penalty {
            if self.mode == ToyMode::Full {
                return bad("penalty requires mode lora".into());
            }
            p.validate()?;
        }
        Ok(())
    }
}

/// What training produced.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedArtifact {
    Full(ToyModel),
    Lora { w1: AdapterPair, w2: AdapterPair },
}

impl TrainedArtifact {
    /// Weights after vanilla-merging any adapters into `base`.
    pub fn merged(&self, base: &ToyModel) -> Result<ToyModel> {
        match self {
            TrainedArtifact::Full(m) => Ok(m.clone()),
            TrainedArtifact::Lora { w1, w2 } => ToyModel::new(
                crate::merge::merge_vanilla(base.w1(), &w1.clone().into())?,
                crate::merge::merge_vanilla(base.w2(), &w2.clone().into())?,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub artifact: TrainedArtifact,
    /// Full-dataset loss after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch gradient descent with weight decay on `data`.
///
/// Batches are reshuffled every epoch from a stream seeded by `cfg.seed`.
/// In LoRA mode `B` starts at zero and `A` uniform in `±1/√k`; the penalty
/// is skipped while the update is still zero.
pub fn train(model: &ToyModel, data: &Dataset, cfg: &ToyRunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let crate::toy::Dims(d_in, h, d_out) = model.dims();
    if data.x().cols() != d_in || data.y().cols() != d_out {
        return Err(Error::shape(
            "training data",
            (d_in, d_out),
            (data.x().cols(), data.y().cols()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut params = match cfg.mode {
        ToyMode::Full => Params::Full {
            w1: model.w1().as_dmatrix().clone(),
            w2: model.w2().as_dmatrix().clone(),
        },
        ToyMode::Lora => {
            let r1 = cfg.rank.min(h.min(d_in));
            let r2 = cfg.rank.min(d_out.min(h));
            if r1 < cfg.rank || r2 < cfg.rank {
                log::warn!("rank {} clamped to layer sizes ({r1}, {r2})", cfg.rank);
            }
            Params::Lora {
                b1: DMatrix::zeros(h, r1),
                a1: uniform_init(&mut rng, r1, d_in),
                b2: DMatrix::zeros(d_out, r2),
                a2: uniform_init(&mut rng, r2, h),
            }
        }
    };
    let penalty_bases = match &cfg.penalty {
        Some(p) => Some((p.base_for(model.w1())?, p.base_for(model.w2())?)),
        None => None,
    };

    let n = data.len();
    let batch = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(batch) {
            let (x, y) = data.rows(idx);
            params.step(model, &x, &y, cfg, penalty_bases.as_ref())?;
        }
        let loss = params.current(model, cfg).loss(data)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        trace.push(loss);
    }
    Ok(TrainOutcome {
        artifact: params.into_artifact(cfg)?,
        loss_trace: trace,
    })
}

fn uniform_init(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

enum Params {
    Full {
        w1: DMatrix<f64>,
        w2: DMatrix<f64>,
    },
    Lora {
        b1: DMatrix<f64>,
        a1: DMatrix<f64>,
        b2: DMatrix<f64>,
        a2: DMatrix<f64>,
    },
}

impl Params {
    fn step(
        &mut self,
        base: &ToyModel,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        cfg: &ToyRunConfig,
        penalty_bases: Option<&(Matrix, Matrix)>,
    ) -> Result<()> {
        let lr = cfg.learning_rate;
        let wd = cfg.weight_decay;
        match self {
            Params::Full { w1, w2 } => {
                let (_, g1, g2) = loss_grads(w1, w2, x, y);
                let mut grads = [g1 + &*w1 * wd, g2 + &*w2 * wd];
                clip(&mut grads, cfg.grad_clip);
                *w1 -= &grads[0] * lr;
                *w2 -= &grads[1] * lr;
            }
            Params::Lora { b1, a1, b2, a2 } => {
                let s1 = cfg.alpha / a1.nrows() as f64;
                let s2 = cfg.alpha / a2.nrows() as f64;
                let d1 = &*b1 * &*a1 * s1;
                let d2 = &*b2 * &*a2 * s2;
                let w1 = base.w1().as_dmatrix() + &d1;
                let w2 = base.w2().as_dmatrix() + &d2;
                let (_, mut g1, mut g2) = loss_grads(&w1, &w2, x, y);
                if let (Some(p), Some((wt1, wt2))) = (&cfg.penalty, penalty_bases) {
                    add_penalty(&mut g1, wt1, d1, p)?;
                    add_penalty(&mut g2, wt2, d2, p)?;
                }
                let mut grads = [
                    &g1 * a1.transpose() * s1 + &*b1 * wd,
                    b1.transpose() * &g1 * s1 + &*a1 * wd,
                    &g2 * a2.transpose() * s2 + &*b2 * wd,
                    b2.transpose() * &g2 * s2 + &*a2 * wd,
                ];
                clip(&mut grads, cfg.grad_clip);
                *b1 -= &grads[0] * lr;
                *a1 -= &grads[1] * lr;
                *b2 -= &grads[2] * lr;
                *a2 -= &grads[3] * lr;
            }
        }
        Ok(())
    }

    /// Effective weights; not checked for finiteness so the caller can
    /// report divergence through the loss.
    fn current(&self, base: &ToyModel, cfg: &ToyRunConfig) -> ToyModel {
        match self {
            Params::Full { w1, w2 } => ToyModel::unchecked(w1.clone(), w2.clone()),
            Params::Lora { b1, a1, b2, a2 } => {
                let s1 = cfg.alpha / a1.nrows() as f64;
                let s2 = cfg.alpha / a2.nrows() as f64;
                ToyModel::unchecked(
                    base.w1().as_dmatrix() + b1 * a1 * s1,
                    base.w2().as_dmatrix() + b2 * a2 * s2,
                )
            }
        }
    }

    fn into_artifact(self, cfg: &ToyRunConfig) -> Result<TrainedArtifact> {
        match self {
            Params::Full { w1, w2 } => Ok(TrainedArtifact::Full(ToyModel::new(Matrix::wrap(w1), Matrix::wrap(w2))?)),
            Params::Lora { b1, a1, b2, a2 } => Ok(TrainedArtifact::Lora {
                w1: AdapterPair::new("w1", Matrix::wrap(b1), Matrix::wrap(a1), cfg.alpha)?,
                w2: AdapterPair::new("w2", Matrix::wrap(b2), Matrix::wrap(a2), cfg.alpha)?,
            }),
        }
    }
}

fn add_penalty(g: &mut DMatrix<f64>, base: &Matrix, delta: DMatrix<f64>, cfg: &PenaltyConfig) -> Result<()> {
    if delta.norm() <= cfg.eps {
        return Ok(());
    }
    let (_, pg) = penalty_grad_dense(base, &Matrix::wrap(delta), cfg)?;
    *g += pg.as_dmatrix();
    Ok(())
}

fn clip(grads: &mut [DMatrix<f64>], cap: Option<f64>) {
    let Some(cap) = cap else { return };
    let norm = grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    if norm > cap {
        for g in grads.iter_mut() {
            *g *= cap / norm;
        }
    }
}
