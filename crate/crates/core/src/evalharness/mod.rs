//! Scenario runs, metrics, run records, comparisons, and the reference-table
//! arithmetic checks.

mod compare;
mod metrics;
mod record;
pub mod reference;
mod runner;

pub use compare::{compare_runs, Comparison, ComparisonRow};
pub use metrics::{
    compute_metrics, f1_score, mean_improvement, relative_improvement, ConfusionMatrix, EvalMetrics, MetricScalar,
};
pub use record::{RunRecord, SampleRow};
pub use reference::{
    load_table_rows, parse_table_rows, table_consistency_check, ConsistencyFlag, TableRow, CONSISTENCY_THRESHOLD,
};
pub use runner::Runner;

use std::path::PathBuf;

use thiserror::Error;

use crate::promptkit::PromptError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty run: no samples to score")]
    EmptyRun,
    #[error("relative improvement is undefined for baseline {0}")]
    UndefinedBaseline(f64),
    #[error("run {run_id} used dataset {digest}, baseline used {baseline_digest}; runs are not comparable")]
    IncomparableRuns {
        run_id: String,
        digest: String,
        baseline_digest: String,
    },
    #[error("baseline run `{0}` is not among the records")]
    UnknownBaseline(String),
    #[error("run {0} is incomplete and cannot be compared")]
    Incomplete(String),
    #[error("run {run_id}: rows do not reconcile with the stored confusion matrix: {message}")]
    Reconcile { run_id: String, message: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("table rows: {0}")]
    Csv(#[from] csv::Error),
}
