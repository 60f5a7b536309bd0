//! Side-by-side comparison of run records against a baseline run.

use serde::Serialize;

use super::metrics::relative_improvement;
use super::record::RunRecord;
use super::EvalError;

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run_id: String,
    pub scenario: String,
    pub backend: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Relative accuracy improvement over the baseline, in percent.
    pub improvement_pct: f64,
    pub is_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub baseline_id: String,
    pub dataset_digest: String,
    pub rows: Vec<ComparisonRow>,
    /// Mean improvement over the non-baseline runs; `None` if there are none.
    pub mean_improvement_pct: Option<f64>,
}

/// Compares records over the same dataset digest. Metrics are rounded to
/// three decimals; improvements use the unrounded accuracies.
pub fn compare_runs(records: &[RunRecord], baseline_id: &str) -> Result<Comparison, EvalError> {
    let baseline = records
        .iter()
        .find(|r| r.run_id == baseline_id)
        .ok_or_else(|| EvalError::UnknownBaseline(baseline_id.to_string()))?;
    let base_acc = baseline
        .metrics
        .ok_or_else(|| EvalError::Incomplete(baseline.run_id.clone()))?
        .accuracy;

    let mut rows = Vec::with_capacity(records.len());
    for record in records {
        if record.dataset_digest != baseline.dataset_digest {
            return Err(EvalError::IncomparableRuns {
                run_id: record.run_id.clone(),
                digest: record.dataset_digest.clone(),
                baseline_digest: baseline.dataset_digest.clone(),
            });
        }
        let m = match (&record.metrics, record.complete) {
            (Some(m), true) => m,
            _ => return Err(EvalError::Incomplete(record.run_id.clone())),
        };
        rows.push(ComparisonRow {
            run_id: record.run_id.clone(),
            scenario: record.scenario.kind.to_string(),
            backend: record.backend.clone(),
            precision: round3(m.precision),
            recall: round3(m.recall),
            f1: round3(m.f1),
            accuracy: round3(m.accuracy),
            improvement_pct: relative_improvement(base_acc, m.accuracy)?,
            is_baseline: record.run_id == baseline_id,
        });
    }
    let others: Vec<f64> = rows
        .iter()
        .filter(|r| !r.is_baseline)
        .map(|r| r.improvement_pct)
        .collect();
    let mean_improvement_pct = (!others.is_empty()).then(|| others.iter().sum::<f64>() / others.len() as f64);
    Ok(Comparison {
        baseline_id: baseline_id.to_string(),
        dataset_digest: baseline.dataset_digest.clone(),
        rows,
        mean_improvement_pct,
    })
}

impl Comparison {
    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let headers = [
            "run",
            "scenario",
            "backend",
            "precision",
            "recall",
            "f1",
            "accuracy",
            "improvement",
        ];
        let body: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                let marker = if r.is_baseline { " (baseline)" } else { "" };
                [
                    format!("{}{marker}", r.run_id),
                    r.scenario.clone(),
                    r.backend.clone(),
                    format!("{:.3}", r.precision),
                    format!("{:.3}", r.recall),
                    format!("{:.3}", r.f1),
                    format!("{:.3}", r.accuracy),
                    format!("{:+.2}%", r.improvement_pct),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = vec![line(headers.to_vec())];
        for row in &body {
            out.push(line(row.iter().map(String::as_str).collect()));
        }
        match self.mean_improvement_pct {
            Some(mean) => out.push(format!("mean improvement over {}: {mean:+.2}%", self.baseline_id)),
            None => out.push(format!(
                "mean improvement over {}: n/a (no other runs)",
                self.baseline_id
            )),
        }
        out.join("\n") + "\n"
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::{compute_metrics, ConfusionMatrix};
    use crate::promptkit::{ScenarioConfig, ScenarioKind};
    use chrono::Utc;

    /// A record whose accuracy is `correct / 1000`.
    fn record(id: &str, kind: ScenarioKind, correct: u64, digest: &str) -> RunRecord {
        let cm = ConfusionMatrix::new(correct, 1000 - correct, 0, 0);
        RunRecord {
            run_id: id.into(),
            scenario: ScenarioConfig::new(kind),
            backend: "mock:canned".into(),
            fine_tune: None,
            dataset_path: None,
            dataset_digest: digest.into(),
            seed: 0,
            started_at: Utc::now(),
            finished_at: Utc::now(),
            complete: true,
            abort_reason: None,
            confusion: cm,
            metrics: Some(compute_metrics(&cm).unwrap()),
            rows: Vec::new(),
        }
    }

    #[test]
    fn improvement_column_and_mean() {
        let records = [
            record("base", ScenarioKind::BaseOneShot, 539, "d"),
            record("few", ScenarioKind::FewShot, 642, "d"),
            record("hyb", ScenarioKind::Hybrid, 687, "d"),
        ];
        let cmp = compare_runs(&records, "base").unwrap();
        assert_eq!(cmp.rows[0].improvement_pct, 0.0);
        assert!((cmp.rows[1].improvement_pct - 19.11).abs() < 0.01);
        assert!((cmp.rows[2].improvement_pct - 27.46).abs() < 0.01);
        let mean = cmp.mean_improvement_pct.unwrap();
        assert!((mean - (cmp.rows[1].improvement_pct + cmp.rows[2].improvement_pct) / 2.0).abs() < 1e-12);
        let text = cmp.to_text();
        assert!(text.contains("+19.11%"), "{text}");
        assert!(text.contains("0.642"));
        let csv = cmp.to_csv().unwrap();
        assert!(csv.starts_with("run_id,scenario,backend,precision,recall,f1,accuracy,improvement_pct,is_baseline\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn single_record_against_itself() {
        let cmp = compare_runs(&[record("only", ScenarioKind::FewShot, 500, "d")], "only").unwrap();
        assert_eq!(cmp.rows.len(), 1);
        assert_eq!(cmp.rows[0].improvement_pct, 0.0);
        assert_eq!(cmp.mean_improvement_pct, None);
    }

    #[test]
    fn refuses_mismatched_or_unknown() {
        let records = [
            record("a", ScenarioKind::FewShot, 500, "d1"),
            record("b", ScenarioKind::Hybrid, 600, "d2"),
        ];
        assert!(matches!(
            compare_runs(&records, "a"),
            Err(EvalError::IncomparableRuns { .. })
        ));
        assert!(matches!(
            compare_runs(&records, "zzz"),
            Err(EvalError::UnknownBaseline(_))
        ));
        let mut partial = record("p", ScenarioKind::Hybrid, 600, "d1");
        partial.complete = false;
        assert!(matches!(
            compare_runs(&[records[0].clone(), partial], "a"),
            Err(EvalError::Incomplete(_))
        ));
    }
}
