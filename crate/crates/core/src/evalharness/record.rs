//! Run records: `<dir>/<run-id>.json` plus a `<run-id>.rows.jsonl` sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, ConfusionMatrix, EvalMetrics};
use super::EvalError;
use crate::backend::{FineTuneProfile, ParseMode};
use crate::corpus::Label;
use crate::promptkit::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: u64,
    pub gold: Label,
    /// `None` when no verdict could be extracted.
    pub predicted: Option<Label>,
    pub parse_mode: ParseMode,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub scenario: ScenarioConfig,
    pub backend: String,
    pub fine_tune: Option<FineTuneProfile>,
    pub dataset_path: Option<String>,
    pub dataset_digest: String,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub complete: bool,
    pub abort_reason: Option<String>,
    pub confusion: ConfusionMatrix,
    /// Absent only for a run aborted before any sample was scored.
    pub metrics: Option<EvalMetrics<f64>>,
    #[serde(skip)]
    pub rows: Vec<SampleRow>,
}

/// Confusion matrix and unparsed count implied by `rows`.
pub fn tally(rows: &[SampleRow]) -> (ConfusionMatrix, u64) {
    let mut cm = ConfusionMatrix::default();
    let mut unparsed = 0;
    for row in rows {
        cm.record(row.gold, row.predicted);
        if row.predicted.is_none() {
            unparsed += 1;
        }
    }
    (cm, unparsed)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl RunRecord {
    pub(crate) fn metrics_for(rows: &[SampleRow]) -> (ConfusionMatrix, Option<EvalMetrics<f64>>) {
        let (cm, unparsed) = tally(rows);
        let metrics = compute_metrics::<f64>(&cm).ok().map(|m| m.with_unparsed(unparsed));
        (cm, metrics)
    }

    /// Checks that the stored matrix and unparsed count match the rows.
    pub fn reconcile(&self) -> Result<(), EvalError> {
        let (cm, unparsed) = tally(&self.rows);
        let fail = |message: String| {
            Err(EvalError::Reconcile {
                run_id: self.run_id.clone(),
                message,
            })
        };
        if cm != self.confusion {
            return fail(format!("rows give {cm:?}, record stores {:?}", self.confusion));
        }
        let stored_unparsed = self.metrics.as_ref().map_or(0, |m| m.unparsed_count);
        if unparsed != stored_unparsed {
            return fail(format!(
                "rows have {unparsed} unparsed, record stores {stored_unparsed}"
            ));
        }
        Ok(())
    }

    pub fn record_path(dir: &Path, run_id: &str) -> PathBuf {
        dir.join(format!("{run_id}.json"))
    }

    pub fn rows_path(dir: &Path, run_id: &str) -> PathBuf {
        dir.join(format!("{run_id}.rows.jsonl"))
    }

    /// Writes the record and its rows sidecar into `dir`, returning the
    /// record path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, EvalError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let rows_path = Self::rows_path(dir, &self.run_id);
        let mut rows = fs::File::create(&rows_path).map_err(io_err(&rows_path))?;
        for row in &self.rows {
            let line = serde_json::to_string(row).expect("rows serialize");
            writeln!(rows, "{line}").map_err(io_err(&rows_path))?;
        }
        let path = Self::record_path(dir, &self.run_id);
        let json = serde_json::to_string_pretty(self).expect("records serialize");
        fs::write(&path, json + "\n").map_err(io_err(&path))?;
        Ok(path)
    }

    /// Loads a record and its sidecar and reconciles them.
    pub fn load(path: &Path) -> Result<RunRecord, EvalError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut record: RunRecord = serde_json::from_str(&text).map_err(|source| EvalError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let rows_path = Self::rows_path(dir, &record.run_id);
        let rows_text = fs::read_to_string(&rows_path).map_err(io_err(&rows_path))?;
        record.rows = rows_text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|source| EvalError::Json {
                path: rows_path.clone(),
                source,
            })?;
        record.reconcile()?;
        Ok(record)
    }
}
