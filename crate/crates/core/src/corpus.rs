//! Labeled defect-detection datasets: loading, validation, stats, oversampling
//! and train/eval splitting.
//!
//! The on-disk format is CodeXGLUE-style JSONL: one object per line with a
//! `func` source string, an integer `target` (0 or 1) and an optional `idx`.
//! Unknown keys are carried through untouched so a load/write cycle is lossless.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Binary defect label. `Buggy` is the positive class everywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Clean,
    Buggy,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Clean => "clean",
            Label::Buggy => "buggy",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Clean => Label::Buggy,
            Label::Buggy => Label::Clean,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the integer `target` field maps onto labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    /// `0 -> Clean`, `1 -> Buggy` (the CodeXGLUE defect-detection convention).
    #[default]
    Standard,
    /// `0 -> Buggy`, `1 -> Clean`.
    Inverted,
}

impl Polarity {
    pub fn label_for(self, target: i64) -> Option<Label> {
        let standard = match target {
            0 => Label::Clean,
            1 => Label::Buggy,
            _ => return None,
        };
        Some(match self {
            Polarity::Standard => standard,
            Polarity::Inverted => standard.flipped(),
        })
    }

    pub fn target_for(self, label: Label) -> i64 {
        let label = match self {
            Polarity::Standard => label,
            Polarity::Inverted => label.flipped(),
        };
        match label {
            Label::Clean => 0,
            Label::Buggy => 1,
        }
    }
}

/// One labeled snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSample {
    pub id: u64,
    pub source: String,
    pub label: Label,
    pub language_tag: String,
    /// Record keys other than `func`, `target` and `idx`.
    pub extra: Map<String, Value>,
}

impl CodeSample {
    pub fn new(id: u64, source: impl Into<String>, label: Label) -> Self {
        Self {
            id,
            source: source.into(),
            label,
            language_tag: DEFAULT_LANGUAGE.to_string(),
            extra: Map::new(),
        }
    }
}

pub const DEFAULT_LANGUAGE: &str = "python";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("cannot balance classes: {0}")]
    CannotBalance(String),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub limit: Option<usize>,
    pub polarity: Polarity,
    pub language_tag: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            limit: None,
            polarity: Polarity::Standard,
            language_tag: DEFAULT_LANGUAGE.to_string(),
        }
    }
}

/// Loads a JSONL dataset with the standard label polarity.
pub fn load_dataset(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Vec<CodeSample>, CorpusError> {
    load_dataset_with(
        path,
        &LoadOptions {
            limit,
            ..LoadOptions::default()
        },
    )
}

pub fn load_dataset_with(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Vec<CodeSample>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, options)
}

/// Parses JSONL text. Blank lines are skipped but still counted for line numbers.
pub fn parse_dataset(text: &str, options: &LoadOptions) -> Result<Vec<CodeSample>, CorpusError> {
    let mut samples: Vec<CodeSample> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut next_id = 0u64;

    for (index, raw) in text.lines().enumerate() {
        if options.limit.is_some_and(|limit| samples.len() >= limit) {
            break;
        }
        let line = index + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut object: Map<String, Value> = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;

        let source = match object.remove("func") {
            Some(Value::String(s)) => s,
            Some(_) => return Err(parse_err(line, "`func` must be a string")),
            None => return Err(parse_err(line, "missing `func`")),
        };
        let target = match object.remove("target") {
            Some(Value::Number(n)) => n
                .as_i64()
                .ok_or_else(|| parse_err(line, "`target` must be an integer"))?,
            Some(_) => return Err(parse_err(line, "`target` must be an integer")),
            None => return Err(parse_err(line, "missing `target`")),
        };
        let id = match object.remove("idx") {
            Some(Value::Number(n)) => n
                .as_u64()
                .ok_or_else(|| parse_err(line, "`idx` must be a non-negative integer"))?,
            Some(_) => return Err(parse_err(line, "`idx` must be a non-negative integer")),
            None => next_id,
        };
        next_id = id + 1;

        let label = options
            .polarity
            .label_for(target)
            .ok_or_else(|| CorpusError::Validation {
                line,
                message: format!("target {target} is outside {{0, 1}}"),
            })?;
        if source.trim().is_empty() {
            return Err(CorpusError::Validation {
                line,
                message: "empty source".into(),
            });
        }
        if !seen.insert(id) {
            return Err(CorpusError::Validation {
                line,
                message: format!("duplicate idx {id}"),
            });
        }

        samples.push(CodeSample {
            id,
            source,
            label,
            language_tag: options.language_tag.clone(),
            extra: object,
        });
    }
    Ok(samples)
}

fn parse_err(line: usize, message: &str) -> CorpusError {
    CorpusError::Parse {
        line,
        message: message.to_string(),
    }
}

/// Serializes one sample as a JSONL record (no trailing newline).
pub fn to_record(sample: &CodeSample, polarity: Polarity) -> String {
    let mut object = sample.extra.clone();
    object.insert("func".into(), Value::String(sample.source.clone()));
    object.insert("target".into(), Value::from(polarity.target_for(sample.label)));
    object.insert("idx".into(), Value::from(sample.id));
    serde_json::to_string(&object).expect("map of json values always serializes")
}

pub fn to_jsonl(samples: &[CodeSample], polarity: Polarity) -> String {
    let mut out = String::new();
    for sample in samples {
        out.push_str(&to_record(sample, polarity));
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[CodeSample], polarity: Polarity) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(to_jsonl(samples, polarity).as_bytes()).map_err(io_err)
}

/// Content digest over the canonical record serialization.
pub fn digest(samples: &[CodeSample]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(to_jsonl(samples, Polarity::Standard).as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub clean_count: usize,
    pub buggy_count: usize,
    pub buggy_ratio: f64,
}

pub fn stats(samples: &[CodeSample]) -> DatasetStats {
    let buggy_count = samples.iter().filter(|s| s.label == Label::Buggy).count();
    let total = samples.len();
    DatasetStats {
        total,
        clean_count: total - buggy_count,
        buggy_count,
        buggy_ratio: if total == 0 {
            0.0
        } else {
            buggy_count as f64 / total as f64
        },
    }
}

/// Random oversampling of the minority class to exact parity.
///
/// Originals come first in input order, followed by the drawn duplicates.
pub fn oversample(samples: &[CodeSample], seed: u64) -> Result<Vec<CodeSample>, CorpusError> {
    let (buggy, clean): (Vec<&CodeSample>, Vec<&CodeSample>) = samples.iter().partition(|s| s.label == Label::Buggy);
    if buggy.is_empty() || clean.is_empty() {
        return Err(CorpusError::CannotBalance(format!(
            "{} clean and {} buggy samples; both classes must be present",
            clean.len(),
            buggy.len()
        )));
    }

    let (minority, deficit) = if buggy.len() < clean.len() {
        (&buggy, clean.len() - buggy.len())
    } else {
        (&clean, buggy.len() - clean.len())
    };

    let mut out = samples.to_vec();
    out.reserve(deficit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..deficit {
        let pick = minority[rng.gen_range(0..minority.len())];
        log::debug!("oversample: duplicating sample {} ({}) as copy", pick.id, pick.label);
        out.push(pick.clone());
    }
    Ok(out)
}

/// Seeded shuffle followed by a `train_fraction` cut.
pub fn split(
    samples: &[CodeSample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<CodeSample>, Vec<CodeSample>), CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::BadFraction(train_fraction));
    }
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((samples.len() as f64) * train_fraction).round() as usize;
    let eval = shuffled.split_off(cut.min(shuffled.len()));
    Ok((shuffled, eval))
}
