//! Model backends: the canonical HTTP classify protocol, verdict parsing, and
//! deterministic mocks for offline runs.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{analyze, has_defect};
use crate::corpus::Label;
use crate::knowledge_map::KnowledgeMap;
use crate::promptkit::PromptBundle;

pub const CLASSIFY_PATH: &str = "/v1/classify";
pub const MAX_NEW_TOKENS: u32 = 8;
pub const DEFAULT_TOKEN_ENV: &str = "REVIEW_BACKEND_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Exact,
    Keyword,
    /// No label could be extracted; the row is scored as wrong.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub raw_output: String,
    pub latency_ms: u64,
    pub parse_mode: ParseMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot extract a verdict from {raw:?}: {reason}")]
pub struct VerdictParseError {
    pub raw: String,
    pub reason: &'static str,
}

/// Extracts a label from a model completion.
///
/// Exact forms are `buggy`, `clean`, `1` and `0` after trimming and
/// lowercasing. Otherwise the completion is scanned word by word for
/// `buggy`/`defective` versus `clean`/`correct`; exactly one side must occur.
pub fn parse_verdict(raw: &str) -> Result<(Label, ParseMode), VerdictParseError> {
    let norm = raw.trim().to_lowercase();
    match norm.as_str() {
        "buggy" | "1" => return Ok((Label::Buggy, ParseMode::Exact)),
        "clean" | "0" => return Ok((Label::Clean, ParseMode::Exact)),
        _ => {}
    }
    let mut buggy = false;
    let mut clean = false;
    for word in norm.split(|c: char| !c.is_alphanumeric()) {
        match word {
            "buggy" | "defective" => buggy = true,
            "clean" | "correct" => clean = true,
            _ => {}
        }
    }
    match (buggy, clean) {
        (true, false) => Ok((Label::Buggy, ParseMode::Keyword)),
        (false, true) => Ok((Label::Clean, ParseMode::Keyword)),
        (true, true) => Err(VerdictParseError {
            raw: raw.to_string(),
            reason: "both labels occur",
        }),
        (false, false) => Err(VerdictParseError {
            raw: raw.to_string(),
            reason: "no label keyword",
        }),
    }
}

/// Descriptive fine-tuning metadata attached to run records. Never executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneProfile {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_input_tokens: u32,
    pub mixed_precision: bool,
    pub oversampled: bool,
    pub optimizer_name: String,
    pub base_model_name: String,
}

impl FineTuneProfile {
    pub fn for_model(base_model_name: impl Into<String>) -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 0.01,
            max_input_tokens: 256,
            mixed_precision: true,
            oversampled: true,
            optimizer_name: "AdamW".to_string(),
            base_model_name: base_model_name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_parallel_requests: usize,
    pub backoff_base_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".to_string(),
            token_env: DEFAULT_TOKEN_ENV.to_string(),
            timeout_ms: 30_000,
            max_retries: 2,
            max_parallel_requests: 4,
            backoff_base_ms: 250,
        }
    }
}

impl BackendConfig {
    pub fn with_endpoint(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_parallel_requests == 0 {
            return Err(BackendError::Config("max_parallel_requests must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout_ms must be positive".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(BackendError::Config("endpoint is empty".into()));
        }
        Ok(())
    }

    /// Delay before retry `n` (0-based): `backoff_base_ms * 2^n`, saturating.
    pub fn backoff_delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(63)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }

    pub fn classify_url(&self) -> String {
        format!("{}{CLASSIFY_PATH}", self.endpoint.trim_end_matches('/'))
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("{source}")]
    VerdictParse {
        #[source]
        source: VerdictParseError,
        latency_ms: u64,
    },
    #[error("sample {0} has no gold label; this mock needs labeled data")]
    MissingGold(u64),
    #[error("canned completions have no entry for sample {0}")]
    CannedLookup(u64),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("cannot read canned completions: {0}")]
    Canned(String),
}

/// What a backend may know about the sample behind a prompt. Gold labels are
/// only consulted by the echo/invert mocks.
#[derive(Debug, Clone, Copy)]
pub struct ReviewTarget<'a> {
    pub id: u64,
    pub source: &'a str,
    pub gold: Option<Label>,
}

pub trait Classifier: Send + Sync {
    fn classify(&self, bundle: &PromptBundle, target: &ReviewTarget<'_>) -> Result<Verdict, BackendError>;

    /// Short description stored in run records.
    fn describe(&self) -> String;

    /// Upper bound on concurrent `classify` calls.
    fn max_parallel(&self) -> usize;
}

fn verdict_from(raw: String, latency_ms: u64) -> Result<Verdict, BackendError> {
    match parse_verdict(&raw) {
        Ok((label, parse_mode)) => Ok(Verdict {
            label,
            raw_output: raw,
            latency_ms,
            parse_mode,
        }),
        Err(source) => Err(BackendError::VerdictParse { source, latency_ms }),
    }
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    prompt: &'a str,
    max_new_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    completion: String,
}

/// Client for the canonical `POST <endpoint>/v1/classify` protocol.
pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn token(&self) -> Option<String> {
        std::env::var(&self.config.token_env).ok().filter(|t| !t.is_empty())
    }

    fn send_once(&self, prompt: &str) -> Result<String, SendError> {
        let mut request = self.agent.post(&self.config.classify_url());
        if let Some(token) = self.token() {
            request = request.set("Authorization", &format!("Bearer {token}"));
        }
        let response = request
            .send_json(ClassifyRequest {
                prompt,
                max_new_tokens: MAX_NEW_TOKENS,
                temperature: 0.0,
            })
            .map_err(|err| match err {
                ureq::Error::Status(status, response) => {
                    SendError::Status(status, response.into_string().unwrap_or_default())
                }
                ureq::Error::Transport(t) => SendError::Transport(t.to_string()),
            })?;
        let status = response.status();
        if status != 200 {
            return Err(SendError::Status(status, response.into_string().unwrap_or_default()));
        }
        let body: ClassifyResponse = response
            .into_json()
            .map_err(|e| SendError::Status(status, format!("malformed response body: {e}")))?;
        Ok(body.completion)
    }
}

enum SendError {
    Transport(String),
    Status(u16, String),
}

impl Classifier for HttpBackend {
    fn classify(&self, bundle: &PromptBundle, _target: &ReviewTarget<'_>) -> Result<Verdict, BackendError> {
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.send_once(&bundle.text) {
                Ok(completion) => {
                    let latency = started.elapsed().as_millis() as u64;
                    return verdict_from(completion, latency);
                }
                Err(SendError::Status(status, body)) => return Err(BackendError::Protocol { status, body }),
                Err(SendError::Transport(message)) => {
                    let retry = attempts - 1;
                    if retry >= self.config.max_retries {
                        return Err(BackendError::Unavailable { attempts, message });
                    }
                    let delay = self.config.backoff_delay(retry);
                    log::debug!("classify attempt {attempts} failed ({message}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!("http:{}", self.config.endpoint)
    }

    fn max_parallel(&self) -> usize {
        self.config.max_parallel_requests
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockMode {
    EchoGold,
    InvertGold,
    AlwaysBuggy,
    FindingsOracle,
    Canned(std::path::PathBuf),
}

impl fmt::Display for MockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MockMode::EchoGold => f.write_str("echo-gold"),
            MockMode::InvertGold => f.write_str("invert-gold"),
            MockMode::AlwaysBuggy => f.write_str("always-buggy"),
            MockMode::FindingsOracle => f.write_str("findings-oracle"),
            MockMode::Canned(path) => write!(f, "canned:{}", path.display()),
        }
    }
}

impl FromStr for MockMode {
    type Err = BackendError;

    /// Accepts `echo-gold`, `invert-gold`, `always-buggy`, `findings-oracle`
    /// and `canned:<path>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("canned:") {
            return Ok(MockMode::Canned(path.into()));
        }
        match s {
            "echo-gold" => Ok(MockMode::EchoGold),
            "invert-gold" => Ok(MockMode::InvertGold),
            "always-buggy" => Ok(MockMode::AlwaysBuggy),
            "findings-oracle" => Ok(MockMode::FindingsOracle),
            other => Err(BackendError::Config(format!(
                "unknown mock mode `{other}` (expected echo-gold, invert-gold, always-buggy, findings-oracle or canned:<path>)"
            ))),
        }
    }
}

enum MockKind {
    EchoGold,
    InvertGold,
    AlwaysBuggy,
    FindingsOracle(KnowledgeMap),
    Canned(HashMap<u64, String>),
}

/// Deterministic offline classifier. Latency is always reported as 0.
pub struct MockBackend {
    mode: MockMode,
    kind: MockKind,
}

impl MockBackend {
    /// `map` is used only by the findings oracle.
    pub fn new(mode: MockMode, map: &KnowledgeMap) -> Result<Self, BackendError> {
        let kind = match &mode {
            MockMode::EchoGold => MockKind::EchoGold,
            MockMode::InvertGold => MockKind::InvertGold,
            MockMode::AlwaysBuggy => MockKind::AlwaysBuggy,
            MockMode::FindingsOracle => MockKind::FindingsOracle(map.clone()),
            MockMode::Canned(path) => MockKind::Canned(load_canned(path)?),
        };
        Ok(Self { mode, kind })
    }

    pub fn canned(completions: HashMap<u64, String>) -> Self {
        Self {
            mode: MockMode::Canned("<memory>".into()),
            kind: MockKind::Canned(completions),
        }
    }

    pub fn mode(&self) -> &MockMode {
        &self.mode
    }

    pub fn needs_gold(&self) -> bool {
        matches!(self.kind, MockKind::EchoGold | MockKind::InvertGold)
    }
}

/// Parses a canned-completion file: a JSON object mapping sample id (as a
/// string) to completion text.
pub fn parse_canned(text: &str) -> Result<HashMap<u64, String>, BackendError> {
    let raw: HashMap<String, String> = serde_json::from_str(text).map_err(|e| BackendError::Canned(e.to_string()))?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u64>()
                .map(|id| (id, v))
                .map_err(|_| BackendError::Canned(format!("key `{k}` is not a sample id")))
        })
        .collect()
}

pub fn load_canned(path: &Path) -> Result<HashMap<u64, String>, BackendError> {
    let text = std::fs::read_to_string(path).map_err(|e| BackendError::Canned(format!("{}: {e}", path.display())))?;
    parse_canned(&text)
}

impl Classifier for MockBackend {
    fn classify(&self, _bundle: &PromptBundle, target: &ReviewTarget<'_>) -> Result<Verdict, BackendError> {
        let raw = match &self.kind {
            MockKind::EchoGold => target.gold.ok_or(BackendError::MissingGold(target.id))?.to_string(),
            MockKind::InvertGold => target
                .gold
                .ok_or(BackendError::MissingGold(target.id))?
                .flipped()
                .to_string(),
            MockKind::AlwaysBuggy => Label::Buggy.to_string(),
            MockKind::FindingsOracle(map) => {
                let findings = analyze(target.source, map);
                let label = if has_defect(&findings, map) {
                    Label::Buggy
                } else {
                    Label::Clean
                };
                label.to_string()
            }
            MockKind::Canned(table) => table
                .get(&target.id)
                .cloned()
                .ok_or(BackendError::CannedLookup(target.id))?,
        };
        verdict_from(raw, 0)
    }

    fn describe(&self) -> String {
        format!("mock:{}", self.mode)
    }

    fn max_parallel(&self) -> usize {
        std::thread::available_parallelism().map_or(4, |n| n.get())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CodeSample;
    use crate::knowledge_map::default_map;
    use crate::promptkit::{build_prompt, ScenarioConfig, ScenarioKind};

    fn bundle_for(sample: &CodeSample) -> PromptBundle {
        build_prompt(
            sample,
            &ScenarioConfig::new(ScenarioKind::FineTunedDirect),
            &[],
            &default_map(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(parse_verdict("buggy").unwrap(), (Label::Buggy, ParseMode::Exact));
        assert_eq!(parse_verdict("  CLEAN\n").unwrap(), (Label::Clean, ParseMode::Exact));
        assert_eq!(parse_verdict("1").unwrap(), (Label::Buggy, ParseMode::Exact));
        assert_eq!(parse_verdict("0").unwrap(), (Label::Clean, ParseMode::Exact));
        assert_eq!(
            parse_verdict("The code is clean.").unwrap(),
            (Label::Clean, ParseMode::Keyword)
        );
        assert_eq!(
            parse_verdict("Looks defective to me").unwrap(),
            (Label::Buggy, ParseMode::Keyword)
        );
        assert!(parse_verdict("buggy or clean, hard to say").is_err());
        assert!(parse_verdict("").is_err());
        assert!(parse_verdict("incorrect usage").is_err());
    }

    #[test]
    fn exact_digits_follow_dataset_targets() {
        use crate::corpus::Polarity;
        assert_eq!(Polarity::Standard.label_for(1), Some(parse_verdict("1").unwrap().0));
        assert_eq!(Polarity::Standard.label_for(0), Some(parse_verdict("0").unwrap().0));
    }

    #[test]
    fn backoff_is_exponential_and_monotone() {
        let cfg = BackendConfig {
            backoff_base_ms: 10,
            ..BackendConfig::default()
        };
        let delays: Vec<u64> = (0..70).map(|n| cfg.backoff_delay(n).as_millis() as u64).collect();
        assert_eq!(&delays[..4], &[10, 20, 40, 80]);
        assert!(delays.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig::default().validate().is_ok());
        let zero_parallel = BackendConfig {
            max_parallel_requests: 0,
            ..BackendConfig::default()
        };
        assert!(zero_parallel.validate().is_err());
        let zero_timeout = BackendConfig {
            timeout_ms: 0,
            ..BackendConfig::default()
        };
        assert!(HttpBackend::new(zero_timeout).is_err());
        assert_eq!(
            BackendConfig::with_endpoint("http://h:1/").classify_url(),
            "http://h:1/v1/classify"
        );
    }

    #[test]
    fn mock_modes() {
        let map = default_map();
        let sample = CodeSample::new(3, "def f(items=[]):\n    return items", Label::Buggy);
        let bundle = bundle_for(&sample);
        let target = ReviewTarget {
            id: sample.id,
            source: &sample.source,
            gold: Some(Label::Clean),
        };
        let run = |mode: MockMode| {
            MockBackend::new(mode, &map)
                .unwrap()
                .classify(&bundle, &target)
                .unwrap()
        };
        assert_eq!(run(MockMode::EchoGold).label, Label::Clean);
        assert_eq!(run(MockMode::InvertGold).label, Label::Buggy);
        assert_eq!(run(MockMode::AlwaysBuggy).label, Label::Buggy);
        assert_eq!(run(MockMode::FindingsOracle).label, Label::Buggy);
        assert_eq!(run(MockMode::EchoGold).latency_ms, 0);

        let unlabeled = ReviewTarget { gold: None, ..target };
        let echo = MockBackend::new(MockMode::EchoGold, &map).unwrap();
        assert!(matches!(
            echo.classify(&bundle, &unlabeled),
            Err(BackendError::MissingGold(3))
        ));
    }

    #[test]
    fn canned_replay_and_lookup() {
        let table = parse_canned(r#"{"3": "The code is clean.", "4": "maybe"}"#).unwrap();
        let mock = MockBackend::canned(table);
        let sample = CodeSample::new(3, "x = 1", Label::Clean);
        let bundle = bundle_for(&sample);
        let target = |id| ReviewTarget {
            id,
            source: "x = 1",
            gold: None,
        };
        let v = mock.classify(&bundle, &target(3)).unwrap();
        assert_eq!((v.label, v.parse_mode), (Label::Clean, ParseMode::Keyword));
        assert_eq!(v.raw_output, "The code is clean.");
        assert!(matches!(
            mock.classify(&bundle, &target(4)),
            Err(BackendError::VerdictParse { .. })
        ));
        assert!(matches!(
            mock.classify(&bundle, &target(5)),
            Err(BackendError::CannedLookup(5))
        ));
        assert!(parse_canned(r#"{"abc": "buggy"}"#).is_err());
    }

    #[test]
    fn mock_mode_round_trips() {
        for s in [
            "echo-gold",
            "invert-gold",
            "always-buggy",
            "findings-oracle",
            "canned:x.json",
        ] {
            assert_eq!(s.parse::<MockMode>().unwrap().to_string(), s);
        }
        assert!("oracle".parse::<MockMode>().is_err());
    }

    #[test]
    fn profile_defaults() {
        let p = FineTuneProfile::for_model("GraphCodeBERT");
        assert_eq!(p.learning_rate, 0.00001);
        assert_eq!(p.weight_decay, 0.01);
        assert_eq!(p.max_input_tokens, 256);
        assert!(p.mixed_precision && p.oversampled);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn padded_exact_forms_parse_exactly(
                word in prop::sample::select(vec!["buggy", "clean", "1", "0"]),
                upper in any::<bool>(),
                left in "[ \t\r\n]{0,5}",
                right in "[ \t\r\n]{0,5}",
            ) {
                let core = if upper { word.to_uppercase() } else { word.to_string() };
                let (label, mode) = parse_verdict(&format!("{left}{core}{right}")).unwrap();
                let expected = if word == "buggy" || word == "1" { Label::Buggy } else { Label::Clean };
                prop_assert_eq!(label, expected);
                prop_assert_eq!(mode, ParseMode::Exact);
            }

            #[test]
            fn parse_verdict_is_total(raw in ".{0,64}") {
                let _ = parse_verdict(&raw);
            }
        }
    }
}
