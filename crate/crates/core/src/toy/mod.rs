//! Small two-layer teacher-student setup for watching how fine-tuning on a
//! second task disturbs a first one, under full-rank and adapter training.

mod data;
mod model;
mod report;
mod train;

pub use data::{gen_interference_tasks, InterferenceTasks, PERTURBATION_SCALE};
pub use model::{Dataset, Dims, ToyModel};
pub use report::{
    evaluate_retention, run_comparison, run_scenario, RetentionReport, ToyComparison, ToyScenario,
    UpdateSummary,
};
pub use train::{
    train, ToyMode, ToyRunConfig, TrainOutcome, TrainedArtifact, REFERENCE_LEARNING_RATE, TOY_LR_SCALE,
};
