//! Prompt assembly for the four experimental scenarios.
//!
//! Layout, in order: task instruction, knowledge-map context, numbered
//! labeled exemplars, symbolic findings for the target, the fenced target, and
//! the `Label:` answer cue. Sections that a scenario disables are omitted.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::Finding;
use crate::corpus::{CodeSample, Label};
use crate::knowledge_map::{render_context, KnowledgeMap};

pub const TASK_INSTRUCTION: &str = "You are reviewing Python code for defects. Classify the target code as buggy or clean. Answer with exactly one word: buggy or clean.";
pub const ANSWER_CUE: &str = "Label:";
pub const TRUNCATION_MARKER: &str = "# ... [truncated]";
pub const DEFAULT_SHOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// One exemplar, no knowledge map.
    BaseOneShot,
    FewShot,
    /// Bare code sent to a fine-tuned classifier.
    FineTunedDirect,
    /// Fine-tuned model plus exemplars plus knowledge map.
    Hybrid,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::BaseOneShot,
        ScenarioKind::FewShot,
        ScenarioKind::FineTunedDirect,
        ScenarioKind::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::BaseOneShot => "base",
            ScenarioKind::FewShot => "few-shot",
            ScenarioKind::FineTunedDirect => "fine-tuned",
            ScenarioKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" | "base-one-shot" | "one-shot" => Ok(ScenarioKind::BaseOneShot),
            "few-shot" | "fewshot" => Ok(ScenarioKind::FewShot),
            "fine-tuned" | "finetuned" | "fine-tuned-direct" => Ok(ScenarioKind::FineTunedDirect),
            "hybrid" => Ok(ScenarioKind::Hybrid),
            other => Err(PromptError::InvalidScenario(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptBudget {
    pub max_chars: usize,
    pub exemplar_max_chars: usize,
}

impl Default for PromptBudget {
    fn default() -> Self {
        Self {
            max_chars: 8000,
            exemplar_max_chars: 1200,
        }
    }
}

impl PromptBudget {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.exemplar_max_chars == 0 || self.max_chars <= self.exemplar_max_chars {
            return Err(PromptError::InvalidScenario(format!(
                "budget requires max_chars > exemplar_max_chars > 0 (got {} and {})",
                self.max_chars, self.exemplar_max_chars
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub shots: usize,
    pub include_catalog: bool,
    pub include_findings: bool,
    pub seed: u64,
    pub budget: PromptBudget,
}

impl ScenarioConfig {
    /// Defaults for `kind`: one shot for the base scenario, four for few-shot
    /// and hybrid, none for the fine-tuned scenario. Hybrid injects both the
    /// catalog and per-sample findings.
    pub fn new(kind: ScenarioKind) -> Self {
        let (shots, include_catalog, include_findings) = match kind {
            ScenarioKind::BaseOneShot => (1, false, false),
            ScenarioKind::FewShot => (DEFAULT_SHOTS, false, false),
            ScenarioKind::FineTunedDirect => (0, false, false),
            ScenarioKind::Hybrid => (DEFAULT_SHOTS, true, true),
        };
        Self {
            kind,
            shots,
            include_catalog,
            include_findings,
            seed: 0,
            budget: PromptBudget::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_shots(mut self, shots: usize) -> Result<Self, PromptError> {
        self.shots = shots;
        self.validate()?;
        Ok(self)
    }

    pub fn with_findings(mut self, include: bool) -> Result<Self, PromptError> {
        self.include_findings = include;
        self.validate()?;
        Ok(self)
    }

    pub fn with_budget(mut self, budget: PromptBudget) -> Result<Self, PromptError> {
        self.budget = budget;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |msg: &str| Err(PromptError::InvalidScenario(format!("{}: {msg}", self.kind)));
        match self.kind {
            ScenarioKind::BaseOneShot => {
                if self.shots != 1 {
                    return bad("the base scenario uses exactly one shot");
                }
                if self.include_catalog || self.include_findings {
                    return bad("the base scenario carries no knowledge map or findings");
                }
            }
            ScenarioKind::FineTunedDirect => {
                if self.shots != 0 {
                    return bad("the fine-tuned scenario sends bare code (zero shots)");
                }
                if self.include_catalog || self.include_findings {
                    return bad("the fine-tuned scenario carries no knowledge map or findings");
                }
            }
            ScenarioKind::FewShot => {
                if self.shots == 0 {
                    return bad("few-shot needs at least one shot");
                }
            }
            ScenarioKind::Hybrid => {
                if !self.include_catalog {
                    return bad("the hybrid scenario always includes the knowledge map");
                }
            }
        }
        self.budget.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub scenario: ScenarioConfig,
    pub sample_id: u64,
    pub text: String,
    pub exemplar_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot select {wanted} exemplars: pool has {buggy} buggy and {clean} clean candidates")]
    InsufficientPool { wanted: usize, buggy: usize, clean: usize },
    #[error("prompt for sample {sample_id} needs {needed} chars without exemplars; budget is {max_chars}")]
    OverBudget {
        sample_id: u64,
        needed: usize,
        max_chars: usize,
    },
    #[error("findings must be supplied iff the scenario includes them")]
    FindingsMismatch,
}

/// Picks `ceil(k/2)` buggy and `floor(k/2)` clean exemplars, never `exclude`.
///
/// Candidates are deduplicated by id (oversampled copies share ids). The
/// result alternates buggy/clean starting with buggy.
pub fn select_exemplars(
    pool: &[CodeSample],
    k: usize,
    seed: u64,
    exclude: u64,
) -> Result<Vec<CodeSample>, PromptError> {
    let mut seen = HashSet::new();
    let candidates: Vec<&CodeSample> = pool.iter().filter(|s| s.id != exclude && seen.insert(s.id)).collect();
    let buggy: Vec<&CodeSample> = candidates.iter().copied().filter(|s| s.label == Label::Buggy).collect();
    let clean: Vec<&CodeSample> = candidates.iter().copied().filter(|s| s.label == Label::Clean).collect();
    let want_buggy = k.div_ceil(2);
    let want_clean = k / 2;
    if buggy.len() < want_buggy || clean.len() < want_clean {
        return Err(PromptError::InsufficientPool {
            wanted: k,
            buggy: buggy.len(),
            clean: clean.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked_buggy: Vec<&CodeSample> = buggy.choose_multiple(&mut rng, want_buggy).copied().collect();
    let picked_clean: Vec<&CodeSample> = clean.choose_multiple(&mut rng, want_clean).copied().collect();

    let mut out = Vec::with_capacity(k);
    for (i, buggy) in picked_buggy.iter().enumerate() {
        out.push((*buggy).clone());
        if let Some(clean) = picked_clean.get(i) {
            out.push((*clean).clone());
        }
    }
    Ok(out)
}

fn fence_for(code: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in code.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat(longest.max(2) + 1)
}

fn fenced(code: &str, language: &str) -> String {
    let fence = fence_for(code);
    format!("{fence}{language}\n{}\n{fence}", code.trim_end_matches('\n'))
}

fn truncate_exemplar(code: &str, max_chars: usize) -> String {
    if code.chars().count() <= max_chars {
        return code.to_string();
    }
    let kept: String = code.chars().take(max_chars).collect();
    format!("{kept}\n{TRUNCATION_MARKER}")
}

fn render_findings(findings: &[Finding]) -> String {
    let mut out = String::from("Symbolic analysis findings for the target code:");
    if findings.is_empty() {
        out.push_str("\n- none");
    }
    for f in findings {
        out.push_str(&format!("\n- {} line {}: {}", f.rule_id, f.line, f.message));
    }
    out
}

fn assemble(
    sample: &CodeSample,
    scenario: &ScenarioConfig,
    exemplars: &[CodeSample],
    catalog: Option<&str>,
    findings: Option<&[Finding]>,
) -> String {
    let target = format!("Target code:\n{}", fenced(&sample.source, &sample.language_tag));
    if scenario.kind == ScenarioKind::FineTunedDirect {
        return format!("{}\n{ANSWER_CUE}", fenced(&sample.source, &sample.language_tag));
    }
    let mut sections = vec![TASK_INSTRUCTION.to_string()];
    if let Some(catalog) = catalog {
        sections.push(catalog.to_string());
    }
    for (n, ex) in exemplars.iter().enumerate() {
        let code = truncate_exemplar(&ex.source, scenario.budget.exemplar_max_chars);
        sections.push(format!(
            "Example {}:\n{}\n{ANSWER_CUE} {}",
            n + 1,
            fenced(&code, &ex.language_tag),
            ex.label
        ));
    }
    if let Some(findings) = findings {
        sections.push(render_findings(findings));
    }
    sections.push(format!("{target}\n{ANSWER_CUE}"));
    sections.join("\n\n")
}

/// Builds the prompt for one sample. Exemplars are drawn from `pool` when the
/// scenario uses shots; `findings` must be given iff `include_findings`.
pub fn build_prompt(
    sample: &CodeSample,
    scenario: &ScenarioConfig,
    pool: &[CodeSample],
    map: &KnowledgeMap,
    findings: Option<&[Finding]>,
) -> Result<PromptBundle, PromptError> {
    scenario.validate()?;
    if findings.is_some() != scenario.include_findings {
        return Err(PromptError::FindingsMismatch);
    }
    let mut exemplars = if scenario.shots > 0 {
        select_exemplars(pool, scenario.shots, scenario.seed, sample.id)?
    } else {
        Vec::new()
    };
    let catalog = scenario.include_catalog.then(|| render_context(map, None));

    loop {
        let text = assemble(sample, scenario, &exemplars, catalog.as_deref(), findings);
        let len = text.chars().count();
        if len <= scenario.budget.max_chars {
            return Ok(PromptBundle {
                scenario: scenario.clone(),
                sample_id: sample.id,
                text,
                exemplar_ids: exemplars.iter().map(|e| e.id).collect(),
            });
        }
        if exemplars.pop().is_none() {
            return Err(PromptError::OverBudget {
                sample_id: sample.id,
                needed: len,
                max_chars: scenario.budget.max_chars,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge_map::default_map;

    fn pool() -> Vec<CodeSample> {
        (0..10)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Buggy } else { Label::Clean };
                CodeSample::new(i, format!("def f{i}():\n    return {i}"), label)
            })
            .collect()
    }

    fn target() -> CodeSample {
        CodeSample::new(100, "def g(x=[]):\n    return x", Label::Buggy)
    }

    #[test]
    fn selection_is_balanced_and_reproducible() {
        let picked = select_exemplars(&pool(), 4, 3, 100).unwrap();
        let labels: Vec<Label> = picked.iter().map(|s| s.label).collect();
        assert_eq!(labels, [Label::Buggy, Label::Clean, Label::Buggy, Label::Clean]);
        assert_eq!(picked, select_exemplars(&pool(), 4, 3, 100).unwrap());
    }

    #[test]
    fn single_shot_is_buggy() {
        let picked = select_exemplars(&pool(), 1, 0, 100).unwrap();
        assert_eq!(picked.len(), 1);
        assert_eq!(picked[0].label, Label::Buggy);
    }

    #[test]
    fn selection_excludes_target_and_needs_both_labels() {
        let only_clean: Vec<_> = pool().into_iter().filter(|s| s.label == Label::Clean).collect();
        assert!(matches!(
            select_exemplars(&only_clean, 4, 0, 100),
            Err(PromptError::InsufficientPool { .. })
        ));
        for seed in 0..20 {
            let picked = select_exemplars(&pool(), 4, seed, 2).unwrap();
            assert!(picked.iter().all(|s| s.id != 2));
        }
    }

    #[test]
    fn scenario_invariants() {
        assert!(ScenarioConfig::new(ScenarioKind::BaseOneShot).with_shots(3).is_err());
        assert!(ScenarioConfig::new(ScenarioKind::FineTunedDirect)
            .with_shots(2)
            .is_err());
        let mut hybrid = ScenarioConfig::new(ScenarioKind::Hybrid);
        hybrid.include_catalog = false;
        assert!(hybrid.validate().is_err());
        assert!(ScenarioConfig::new(ScenarioKind::Hybrid).with_findings(false).is_ok());
        for kind in ScenarioKind::ALL {
            ScenarioConfig::new(kind).validate().unwrap();
            assert_eq!(kind.as_str().parse::<ScenarioKind>().unwrap(), kind);
        }
        let bad_budget = PromptBudget {
            max_chars: 100,
            exemplar_max_chars: 100,
        };
        assert!(ScenarioConfig::new(ScenarioKind::FewShot)
            .with_budget(bad_budget)
            .is_err());
    }

    #[test]
    fn base_prompt_has_one_exemplar_and_no_catalog() {
        let bundle = build_prompt(
            &target(),
            &ScenarioConfig::new(ScenarioKind::BaseOneShot),
            &pool(),
            &default_map(),
            None,
        )
        .unwrap();
        assert_eq!(bundle.exemplar_ids.len(), 1);
        assert_eq!(bundle.text.matches("Example ").count(), 1);
        assert!(!bundle.text.contains("Knowledge map"));
        assert!(bundle.text.ends_with("```\nLabel:"));
        assert!(bundle.text.starts_with(TASK_INSTRUCTION));
    }

    #[test]
    fn hybrid_prompt_layout() {
        let findings = crate::analyzer::analyze(&target().source, &default_map());
        let bundle = build_prompt(
            &target(),
            &ScenarioConfig::new(ScenarioKind::Hybrid),
            &pool(),
            &default_map(),
            Some(&findings),
        )
        .unwrap();
        let text = &bundle.text;
        assert!(text.contains(&render_context(&default_map(), None)));
        assert_eq!(bundle.exemplar_ids.len(), 4);
        let order = [
            text.find(TASK_INSTRUCTION).unwrap(),
            text.find("Knowledge map").unwrap(),
            text.find("Example 1:").unwrap(),
            text.find("Example 4:").unwrap(),
            text.find("Symbolic analysis findings").unwrap(),
            text.find("Target code:").unwrap(),
        ];
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
        assert!(text.contains("- KM-05 line 1:"));
    }

    #[test]
    fn fine_tuned_prompt_is_bare_code() {
        let bundle = build_prompt(
            &target(),
            &ScenarioConfig::new(ScenarioKind::FineTunedDirect),
            &[],
            &default_map(),
            None,
        )
        .unwrap();
        assert_eq!(bundle.text, "```python\ndef g(x=[]):\n    return x\n```\nLabel:");
        assert!(bundle.exemplar_ids.is_empty());
    }

    #[test]
    fn findings_must_match_scenario() {
        let res = build_prompt(
            &target(),
            &ScenarioConfig::new(ScenarioKind::Hybrid),
            &pool(),
            &default_map(),
            None,
        );
        assert_eq!(res, Err(PromptError::FindingsMismatch));
    }

    #[test]
    fn long_exemplars_are_truncated() {
        let mut pool = pool();
        pool[0].source = "x = 1\n".repeat(500);
        let scenario = ScenarioConfig::new(ScenarioKind::FewShot).with_shots(10).unwrap();
        let bundle = build_prompt(&target(), &scenario, &pool, &default_map(), None).unwrap();
        assert!(bundle.text.contains(TRUNCATION_MARKER));
    }

    #[test]
    fn budget_drops_exemplars_from_the_end() {
        let mut scenario = ScenarioConfig::new(ScenarioKind::FewShot);
        let full = build_prompt(&target(), &scenario, &pool(), &default_map(), None).unwrap();
        scenario.budget = PromptBudget {
            max_chars: full.text.chars().count() - 1,
            exemplar_max_chars: 100,
        };
        let trimmed = build_prompt(&target(), &scenario, &pool(), &default_map(), None).unwrap();
        assert_eq!(trimmed.exemplar_ids, full.exemplar_ids[..3]);
        assert!(trimmed.text.chars().count() <= scenario.budget.max_chars);
    }

    #[test]
    fn oversized_target_is_an_error() {
        let huge = CodeSample::new(7, "y = 2\n".repeat(2000), Label::Clean);
        let res = build_prompt(
            &huge,
            &ScenarioConfig::new(ScenarioKind::FineTunedDirect),
            &[],
            &default_map(),
            None,
        );
        assert!(matches!(res, Err(PromptError::OverBudget { sample_id: 7, .. })));
    }

    #[test]
    fn fence_grows_past_backticks_in_code() {
        let s = CodeSample::new(1, "doc = '```'", Label::Clean);
        let bundle = build_prompt(
            &s,
            &ScenarioConfig::new(ScenarioKind::FineTunedDirect),
            &[],
            &default_map(),
            None,
        )
        .unwrap();
        assert!(bundle.text.starts_with("````python\n"));
    }
}
