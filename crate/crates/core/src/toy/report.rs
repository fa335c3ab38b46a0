use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::data::gen_interference_tasks;
use super::model::{Dataset, Dims, ToyModel};
use super::train::{train, ToyMode, ToyRunConfig, TrainedArtifact};
use crate::analysis::{effective_top_t, AlignmentMetrics, DEFAULT_TOP_T};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, stable_rank, truncated_svd, Matrix};
use crate::penalty::{BaseApprox, PenaltyConfig, PenaltyVariant};

/// A full toy run: data generation, training and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyScenario {
    pub dims: Dims,
    pub n_samples: usize,
    pub top_t: usize,
    #[serde(flatten)]
    pub run: ToyRunConfig,
}

impl Default for ToyScenario {
    fn default() -> Self {
        Self {
            dims: Dims(32, 48, 32),
            n_samples: 512,
            top_t: DEFAULT_TOP_T,
            run: ToyRunConfig::default(),
        }
    }
}

impl ToyScenario {
    /// Parses a scenario. Missing fields take their defaults; unknown
    /// fields are rejected.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidArgument("scenario must be a JSON object".into()))?;
        let known = serde_json::to_value(ToyScenario::default())?;
        let known = known.as_object().expect("scenario serializes to an object");
        if let Some(extra) = obj.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::InvalidArgument(format!("unknown scenario field {extra:?}")));
        }
        let mut merged = known.clone();
        merged.extend(obj.clone());
        let scenario: ToyScenario = serde_json::from_value(serde_json::Value::Object(merged))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_t == 0 {
            return Err(Error::InvalidArgument("top_t must be at least 1".into()));
        }
        self.run.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateSummary {
    pub stable_rank: Option<f64>,
    pub metrics: Option<AlignmentMetrics>,
    pub delta_fro_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub task_a_loss_before: f64,
    pub task_a_loss_after: f64,
    pub task_a_loss_increase: f64,
    pub task_b_loss_before: f64,
    pub task_b_loss_after: f64,
    /// Keyed by `w1` / `w2`.
    pub updates: BTreeMap<String, UpdateSummary>,
    pub loss_trace: Vec<f64>,
    pub config: Option<ToyScenario>,
    pub metadata: BTreeMap<String, String>,
}

impl RetentionReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }
}

fn summarize(base: &Matrix, tuned: &Matrix, top_t: usize) -> Result<UpdateSummary> {
    let delta = tuned - base;
    let delta_fro_norm = frobenius_norm(&delta);
    if delta.is_zero() {
        return Ok(UpdateSummary { stable_rank: None, metrics: None, delta_fro_norm });
    }
    let t = effective_top_t("toy", base.shape(), top_t);
    let svd = truncated_svd(base, t)?;
    Ok(UpdateSummary {
        stable_rank: Some(stable_rank(&delta)?),
        metrics: Some(crate::analysis::alignment_metrics_with_svd(base, &delta, &svd)?),
        delta_fro_norm,
    })
}

/// Losses on both tasks before and after training, plus the shape of each
/// weight update relative to `base`. LoRA results are merged first.
pub fn evaluate_retention(
    base: &ToyModel,
    result: &TrainedArtifact,
    datasets: (&Dataset, &Dataset),
    top_t: usize,
) -> Result<RetentionReport> {
    let (task_a, task_b) = datasets;
    let tuned = result.merged(base)?;
    if tuned.dims() != base.dims() {
        return Err(Error::shape("trained model", base.w1().shape(), tuned.w1().shape()));
    }
    let before = base.loss(task_a)?;
    let after = tuned.loss(task_a)?;
    let mut updates = BTreeMap::new();
    updates.insert("w1".to_string(), summarize(base.w1(), tuned.w1(), top_t)?);
    updates.insert("w2".to_string(), summarize(base.w2(), tuned.w2(), top_t)?);
    Ok(RetentionReport {
        task_a_loss_before: before,
        task_a_loss_after: after,
        task_a_loss_increase: after - before,
        task_b_loss_before: base.loss(task_b)?,
        task_b_loss_after: tuned.loss(task_b)?,
        updates,
        loss_trace: Vec::new(),
        config: None,
        metadata: BTreeMap::new(),
    })
}

/// Generates the tasks, trains on task B starting from task A's teacher and
/// evaluates retention of task A.
pub fn run_scenario(scenario: &ToyScenario) -> Result<RetentionReport> {
    scenario.validate()?;
    let tasks = gen_interference_tasks(scenario.run.seed, scenario.dims, scenario.n_samples)?;
    let base = &tasks.teacher_a;
    let out = train(base, &tasks.task_b, &scenario.run)?;
    let mut report = evaluate_retention(base, &out.artifact, (&tasks.task_a, &tasks.task_b), scenario.top_t)?;
    report.loss_trace = out.loss_trace;
    report.config = Some(scenario.clone());
    report.metadata.insert(
        "scenario_origin".into(),
        "synthetic teacher-student construction; all constants are toolkit choices".into(),
    );
    Ok(report)
}

/// The three arms of the interference comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyComparison {
    pub full: RetentionReport,
    pub lora: RetentionReport,
    pub lora_reg_both: RetentionReport,
}

impl ToyComparison {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }
}

/// Runs `scenario` as full fine-tuning, plain LoRA, and LoRA with the
/// both-spaces penalty (β = 1 against the exact base), in parallel.
pub fn run_comparison(scenario: &ToyScenario) -> Result<ToyComparison> {
    let arm = |mode: ToyMode, penalty: Option<PenaltyConfig>| {
        let mut s = scenario.clone();
        s.run.mode = mode;
        s.run.penalty = penalty;
        s
    };
    let reg = PenaltyConfig {
        variant: PenaltyVariant::Both,
        beta: 1.0,
        base_approx: BaseApprox::Exact,
        ..PenaltyConfig::default()
    };
    let (full, (lora, reg)) = rayon::join(
        || run_scenario(&arm(ToyMode::Full, None)),
        || {
            rayon::join(
                || run_scenario(&arm(ToyMode::Lora, None)),
                || run_scenario(&arm(ToyMode::Lora, Some(reg))),
            )
        },
    );
    Ok(ToyComparison { full: full?, lora: lora?, lora_reg_both: reg? })
}
