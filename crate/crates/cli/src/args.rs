use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "deltascope", version, about = "Inspect, analyze and merge fine-tuning updates of checkpoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for per-layer work [default: available cores; DELTASCOPE_THREADS overrides]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer stable rank and alignment metrics of an update
    Analyze(AnalyzeArgs),
    /// Merge adapters into a base checkpoint
    Merge(MergeArgs),
    /// List tensor names, shapes and dtypes of a container
    Inspect(InspectArgs),
    /// Pass@1 or safety score of an evaluation log
    Score(ScoreArgs),
    /// Run the toy interference experiment
    Toytrain(ToyArgs),
}

#[derive(Debug, Args)]
pub struct AdapterFlags {
    /// LoRA rank r, used when the adapter has no sidecar config [default: 4]
    #[arg(long)]
    pub rank: Option<usize>,

    /// LoRA scaling numerator α; overrides the sidecar value [default: 16]
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Base checkpoint
    #[arg(long)]
    pub base: PathBuf,

    /// Fine-tuned checkpoint; the update is its difference from the base
    #[arg(long, conflicts_with = "adapter", required_unless_present = "adapter")]
    pub tuned: Option<PathBuf>,

    /// Adapter container with lora_A / lora_B tensors
    #[arg(long)]
    pub adapter: Option<PathBuf>,

    #[command(flatten)]
    pub adapter_flags: AdapterFlags,

    /// Size of the singular subspace for m2 and m4
    #[arg(long, default_value_t = 16)]
    pub top_t: usize,

    /// Write the JSON report here
    #[arg(long)]
    pub json: Option<PathBuf>,

    /// Write the CSV report here
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Vanilla,
    #[value(alias = "ortho_col")]
    OrthoCol,
    #[value(alias = "ortho_both")]
    OrthoBoth,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F64,
    F32,
    F16,
    Bf16,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Base checkpoint
    #[arg(long)]
    pub base: PathBuf,

    /// Adapter container with lora_A / lora_B tensors
    #[arg(long)]
    pub adapter: PathBuf,

    #[command(flatten)]
    pub adapter_flags: AdapterFlags,

    #[arg(long, value_enum, default_value = "vanilla")]
    pub mode: ModeArg,

    /// Projector rank for the ortho modes
    #[arg(long, default_value_t = 64)]
    pub k: usize,

    /// Rescaling of the projected update (ortho_both only)
    #[arg(long, default_value_t = 1.0, conflicts_with = "lambda_sweep")]
    pub lambda: f64,

    /// Write one merge per λ in {1, 1.15, 1.75, 1.2, 1.25} (ortho_both only)
    #[arg(long)]
    pub lambda_sweep: bool,

    /// Leave tensors without an adapter out of the output
    #[arg(long)]
    pub no_passthrough: bool,

    /// Storage precision of the merged container
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: PrecisionArg,

    /// Merged container; with --lambda-sweep a `_lambda<λ>` suffix is added
    #[arg(long)]
    pub out: PathBuf,

    /// Manifest path [default: <out stem>.manifest.json]
    #[arg(long, conflicts_with = "lambda_sweep")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,

    /// Print JSON instead of tab-separated lines
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    #[value(name = "pass-at-1", alias = "pass_at_1")]
    PassAt1,
    Safety,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolarityArg {
    #[value(alias = "safe_fraction")]
    SafeFraction,
    #[value(alias = "harmful_fraction")]
    HarmfulFraction,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSON-lines log of {"id", "outcomes"} records
    #[arg(long)]
    pub log: PathBuf,

    #[arg(long, value_enum, default_value = "pass-at-1")]
    pub metric: MetricArg,

    /// Which share the safety score reports
    #[arg(long, value_enum, default_value = "safe-fraction")]
    pub polarity: PolarityArg,

    /// Require exactly n outcomes per record for pass-at-1 [reference setup: 8]
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ToyModeArg {
    Full,
    Lora,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PenaltyArg {
    None,
    Col,
    Both,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// Scenario JSON; fields left out take their defaults
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// Report path
    #[arg(long)]
    pub out: PathBuf,

    /// Run the full, lora and lora+both-penalty arms and write all three
    #[arg(long)]
    pub compare: bool,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long, value_enum)]
    pub mode: Option<ToyModeArg>,

    /// LoRA rank r [default: 4]
    #[arg(long)]
    pub rank: Option<usize>,

    /// LoRA α [default: 16]
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Learning rate [default: 5e-3, i.e. 5e-5 scaled by 100]
    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Weight decay [default: 1e-4]
    #[arg(long)]
    pub weight_decay: Option<f64>,

    /// Orthogonality penalty added during lora training
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,

    /// Penalty weight β [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,

    /// Subspace size for the report's m2 and m4 [default: 16]
    #[arg(long)]
    pub top_t: Option<usize>,
}
