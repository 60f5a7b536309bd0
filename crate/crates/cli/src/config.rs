use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kmreview::backend::BackendConfig;
use kmreview::promptkit::{PromptBudget, ScenarioKind};
use serde::Deserialize;

/// Scenario defaults applied before command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDefaults {
    pub kind: Option<ScenarioKind>,
    pub shots: Option<usize>,
    pub include_findings: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: BackendConfig,
    pub budget: PromptBudget,
    pub scenario: ScenarioDefaults,
    pub seed: u64,
    pub runs_dir: PathBuf,
    pub knowledge_map: Option<PathBuf>,
    /// Read `target` as 0 = buggy, 1 = clean.
    pub inverted_labels: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            backend: BackendConfig::default(),
            budget: PromptBudget::default(),
            scenario: ScenarioDefaults::default(),
            seed: 0,
            runs_dir: PathBuf::from("runs"),
            knowledge_map: None,
            inverted_labels: false,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Config =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.backend.validate()?;
        config.budget.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c: Config = serde_json::from_str(
            r#"{"backend": {"endpoint": "http://x:1", "max_retries": 5}, "scenario": {"kind": "few-shot", "shots": 6}}"#,
        )
        .unwrap();
        assert_eq!(c.backend.endpoint, "http://x:1");
        assert_eq!(c.backend.max_retries, 5);
        assert_eq!(c.backend.token_env, "REVIEW_BACKEND_TOKEN");
        assert_eq!(c.scenario.kind, Some(ScenarioKind::FewShot));
        assert_eq!(c.budget, PromptBudget::default());
        assert!(serde_json::from_str::<Config>(r#"{"bogus": 1}"#).is_err());
    }
}
