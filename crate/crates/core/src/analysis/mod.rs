//! Stable rank and base/update overlap metrics per layer, aggregated by module
//! type, with deterministic JSON and CSV output.

mod emit;
mod metrics;
mod report;

pub use emit::{emit_report, round_sig9, to_csv, to_json, ReportFormat, CSV_COLUMNS};
pub use metrics::{alignment_metrics, alignment_metrics_with_svd, AlignmentMetrics, DEFAULT_TOP_T};
pub use report::{
    aggregate_reports, analyze_layer, analyze_updates, effective_top_t, layer_index, module_type,
    AggregateReport, AnalysisReport, LayerReport, ModuleAggregate,
};
