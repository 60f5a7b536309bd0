//! Scenario runner: prompts, classifies and scores every sample of a dataset,
//! with a bounded worker pool.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::Utc;

use super::record::{RunRecord, SampleRow};
use super::EvalError;
use crate::analyzer::analyze;
use crate::backend::{BackendError, Classifier, FineTuneProfile, ParseMode, ReviewTarget};
use crate::corpus::{digest, CodeSample};
use crate::knowledge_map::KnowledgeMap;
use crate::promptkit::{build_prompt, select_exemplars, PromptError, ScenarioConfig};

/// Builder for one scenario run.
///
/// Exemplars come from `pool` (the dataset itself unless set) and are chosen
/// with the run seed, so every sample sees the same exemplar draw up to the
/// exclusion of the sample itself.
pub struct Runner<'a> {
    scenario: ScenarioConfig,
    backend: &'a dyn Classifier,
    map: &'a KnowledgeMap,
    pool: Option<&'a [CodeSample]>,
    seed: u64,
    parallelism: Option<usize>,
    dataset_path: Option<String>,
    fine_tune: Option<FineTuneProfile>,
    run_id: Option<String>,
}

enum Outcome {
    Row(SampleRow),
    Abort(String),
}

impl<'a> Runner<'a> {
    pub fn new(scenario: ScenarioConfig, backend: &'a dyn Classifier, map: &'a KnowledgeMap) -> Self {
        let seed = scenario.seed;
        Self {
            scenario,
            backend,
            map,
            pool: None,
            seed,
            parallelism: None,
            dataset_path: None,
            fine_tune: None,
            run_id: None,
        }
    }

    pub fn pool(mut self, pool: &'a [CodeSample]) -> Self {
        self.pool = Some(pool);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Caps worker threads; the backend's own bound still applies.
    pub fn parallelism(mut self, workers: usize) -> Self {
        self.parallelism = Some(workers.max(1));
        self
    }

    pub fn dataset_path(mut self, path: impl AsRef<Path>) -> Self {
        self.dataset_path = Some(path.as_ref().display().to_string());
        self
    }

    pub fn fine_tune(mut self, profile: FineTuneProfile) -> Self {
        self.fine_tune = Some(profile);
        self
    }

    pub fn run_id(mut self, id: impl Into<String>) -> Self {
        self.run_id = Some(id.into());
        self
    }

    fn score_one(&self, sample: &CodeSample, scenario: &ScenarioConfig, pool: &[CodeSample]) -> Outcome {
        let findings = scenario.include_findings.then(|| analyze(&sample.source, self.map));
        let unparsed = |error: String, latency_ms| SampleRow {
            sample_id: sample.id,
            gold: sample.label,
            predicted: None,
            parse_mode: ParseMode::Fallback,
            latency_ms,
            error: Some(error),
        };
        let bundle = match build_prompt(sample, scenario, pool, self.map, findings.as_deref()) {
            Ok(b) => b,
            Err(err @ PromptError::OverBudget { .. }) => return Outcome::Row(unparsed(err.to_string(), 0)),
            Err(err) => return Outcome::Abort(err.to_string()),
        };
        let target = ReviewTarget {
            id: sample.id,
            source: &sample.source,
            gold: Some(sample.label),
        };
        match self.backend.classify(&bundle, &target) {
            Ok(v) => Outcome::Row(SampleRow {
                sample_id: sample.id,
                gold: sample.label,
                predicted: Some(v.label),
                parse_mode: v.parse_mode,
                latency_ms: v.latency_ms,
                error: None,
            }),
            Err(BackendError::VerdictParse { source, latency_ms }) => {
                Outcome::Row(unparsed(source.to_string(), latency_ms))
            }
            Err(err) => Outcome::Abort(format!("sample {}: {err}", sample.id)),
        }
    }

    /// Runs the scenario over `dataset`. Rows stay in dataset order whatever
    /// the completion order. A backend failure other than an unparseable
    /// verdict stops the run; the record is then marked incomplete and holds
    /// the rows scored so far.
    pub fn run(&self, dataset: &[CodeSample]) -> Result<RunRecord, EvalError> {
        if dataset.is_empty() {
            return Err(EvalError::EmptyRun);
        }
        let mut scenario = self.scenario.clone();
        scenario.seed = self.seed;
        scenario.validate()?;
        let pool = self.pool.unwrap_or(dataset);
        if scenario.shots > 0 {
            // Fail fast when the pool can never satisfy the shot count.
            select_exemplars(pool, scenario.shots, scenario.seed, u64::MAX)?;
        }

        let started_at = Utc::now();
        let workers = self
            .parallelism
            .unwrap_or(usize::MAX)
            .min(self.backend.max_parallel())
            .clamp(1, dataset.len());
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let slots: Mutex<Vec<Option<SampleRow>>> = Mutex::new(vec![None; dataset.len()]);
        let abort: Mutex<Option<(usize, String)>> = Mutex::new(None);

        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(sample) = dataset.get(i) else { break };
                    match self.score_one(sample, &scenario, pool) {
                        Outcome::Row(row) => slots.lock().unwrap()[i] = Some(row),
                        Outcome::Abort(reason) => {
                            stop.store(true, Ordering::SeqCst);
                            let mut slot = abort.lock().unwrap();
                            // Keep the failure at the lowest index for a stable report.
                            if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                                *slot = Some((i, reason));
                            }
                            break;
                        }
                    }
                });
            }
        });

        let rows: Vec<SampleRow> = slots.into_inner().unwrap().into_iter().flatten().collect();
        let abort_reason = abort.into_inner().unwrap().map(|(_, reason)| reason);
        if let Some(reason) = &abort_reason {
            log::warn!(
                "run aborted after {} of {} samples: {reason}",
                rows.len(),
                dataset.len()
            );
        }
        let (confusion, metrics) = RunRecord::metrics_for(&rows);
        let run_id = self.run_id.clone().unwrap_or_else(|| {
            format!(
                "{}-{}-s{}",
                scenario.kind,
                started_at.format("%Y%m%dT%H%M%S%.3f"),
                self.seed
            )
            .replace('.', "")
        });
        Ok(RunRecord {
            run_id,
            scenario,
            backend: self.backend.describe(),
            fine_tune: self.fine_tune.clone(),
            dataset_path: self.dataset_path.clone(),
            dataset_digest: digest(dataset),
            seed: self.seed,
            started_at,
            finished_at: Utc::now(),
            complete: abort_reason.is_none(),
            abort_reason,
            confusion,
            metrics,
            rows,
        })
    }
}
