use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Knowledge-map guided code review: static detectors, scenario prompts,
/// model backends and evaluation runs.
///
/// Exit codes: 0 = success / nothing found / clean verdict; 1 = a problem was
/// found (defect finding, buggy verdict, inconsistent table row); 2 = error.
#[derive(Debug, Parser)]
#[command(name = "kmreview", version)]
pub struct Cli {
    /// JSON config file with `backend`, `budget` and `scenario` defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for every randomized step (exemplar draws, resampling, splits).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Knowledge-map JSON file; the built-in 20-rule map is used otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    pub map: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the knowledge-map detectors over a Python file.
    Analyze(AnalyzeArgs),
    /// Classify one snippet under a scenario and print the verdict.
    Review(ReviewArgs),
    /// Prompt inspection.
    #[command(subcommand)]
    Prompt(PromptCommand),
    /// Scenario runs, comparisons and reference-table checks.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Dataset statistics, oversampling and splitting.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Pretty,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Base,
    FewShot,
    FineTuned,
    Hybrid,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Python source file, or `-` for stdin.
    #[arg(default_value = "-")]
    pub path: String,

    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    pub format: Format,

    /// Fail (exit 2) when any region cannot be parsed instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

/// Where the code under review comes from.
#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Python source file (`-` for stdin). Has no gold label.
    #[arg(conflicts_with_all = ["dataset", "sample_id"])]
    pub path: Option<String>,

    /// Dataset JSONL holding the target sample.
    #[arg(long, requires = "sample_id", value_name = "PATH")]
    pub dataset: Option<PathBuf>,

    /// `idx` of the target sample within `--dataset`.
    #[arg(long, requires = "dataset")]
    pub sample_id: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Experimental scenario.
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,

    /// Number of exemplars (base is fixed at 1, fine-tuned at 0).
    #[arg(long)]
    pub shots: Option<usize>,

    /// Dataset JSONL to draw exemplars from.
    #[arg(long, value_name = "PATH")]
    pub pool: Option<PathBuf>,

    /// Hybrid only: include the catalog but not per-sample findings.
    #[arg(long)]
    pub no_findings: bool,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct BackendArgs {
    /// Base URL of a server speaking `POST /v1/classify`.
    #[arg(long, value_name = "URL")]
    pub backend_url: Option<String>,

    /// Offline mock: echo-gold, invert-gold, always-buggy, findings-oracle or
    /// canned:<path> (JSON object mapping sample id to completion).
    #[arg(long, value_name = "MODE")]
    pub mock: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum PromptCommand {
    /// Build the prompt for one target and print it.
    Preview(PreviewArgs),
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Write the prompt text here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// JSON sidecar with exemplar ids and scenario parameters. Defaults to
    /// `<out>.json` when `--out` is given.
    #[arg(long, value_name = "PATH")]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Run a scenario over a dataset and write a run record.
    Run(EvalRunArgs),
    /// Compare run records against a baseline run.
    Compare(CompareArgs),
    /// Recompute F1 from (precision, recall) rows of a CSV and flag mismatches.
    CheckTables(CheckTablesArgs),
    /// Recompute the published improvement figures.
    Reference,
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub backend: BackendArgs,

    /// Directory for `<run-id>.json` and `<run-id>.rows.jsonl`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub run_id: Option<String>,

    /// Only use the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Worker threads (bounded by the backend's parallel limit).
    #[arg(long)]
    pub parallel: Option<usize>,

    /// Base model name recorded in the fine-tuning profile (fine-tuned and
    /// hybrid scenarios).
    #[arg(long)]
    pub model: Option<String>,

    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run record files (`<run-id>.json`).
    #[arg(required = true)]
    pub records: Vec<PathBuf>,

    /// Run id of the baseline; defaults to the first record.
    #[arg(long)]
    pub baseline: Option<String>,

    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
pub struct CheckTablesArgs {
    /// CSV with header; columns `precision,recall,f1` and optionally
    /// `scenario,model,accuracy`.
    pub csv: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Label counts and buggy ratio.
    Stats(DatasetStatsArgs),
    /// Oversample the minority class to parity.
    Resample(ResampleArgs),
    /// Seeded train/test split.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct DatasetStatsArgs {
    pub path: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    pub path: PathBuf,
    /// Output JSONL; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub path: PathBuf,
    /// Fraction of samples in the training part.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Directory receiving `train.jsonl` and `test.jsonl`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}
