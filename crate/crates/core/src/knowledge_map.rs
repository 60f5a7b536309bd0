//! The knowledge map: a catalog of Python bug patterns and best practices that
//! is rendered into prompts as structured prior knowledge.
//!
//! The first five entries are backed by detectors in [`crate::analyzer`]; the
//! rest are catalog-only and exist to give the model the full context block.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Naming,
    ControlFlow,
    ErrorHandling,
    Resources,
    Semantics,
    Style,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Advice,
    Warning,
    Defect,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Advice => "advice",
            Severity::Warning => "warning",
            Severity::Defect => "defect",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub rule_id: String,
    pub name: String,
    pub category: Category,
    pub description: String,
    pub severity: Severity,
    pub has_detector: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeMap {
    rules: Vec<Rule>,
    version: String,
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog is not a valid rule array: {0}")]
    Format(#[from] serde_json::Error),
    #[error("duplicate rule_id {0}")]
    DuplicateId(String),
    #[error("rule {0} has an empty description")]
    EmptyDescription(String),
    #[error("rule {0} description spans multiple lines")]
    MultilineDescription(String),
    #[error("rule with empty rule_id")]
    EmptyId,
}

/// A catalog loaded from disk plus non-fatal notes about it.
#[derive(Debug, Clone)]
pub struct LoadedMap {
    pub map: KnowledgeMap,
    pub warnings: Vec<String>,
}

pub const DEFAULT_RULE_COUNT: usize = 20;

impl KnowledgeMap {
    /// Validates the rule set. The version is a content digest so equal
    /// catalogs always carry equal versions.
    pub fn new(rules: Vec<Rule>) -> Result<Self, MapError> {
        let mut seen = HashSet::new();
        for rule in &rules {
            if rule.rule_id.trim().is_empty() {
                return Err(MapError::EmptyId);
            }
            if !seen.insert(rule.rule_id.as_str()) {
                return Err(MapError::DuplicateId(rule.rule_id.clone()));
            }
            if rule.description.trim().is_empty() {
                return Err(MapError::EmptyDescription(rule.rule_id.clone()));
            }
            if rule.description.contains(['\n', '\r']) {
                return Err(MapError::MultilineDescription(rule.rule_id.clone()));
            }
        }
        let json = serde_json::to_vec(&rules)?;
        let version = format!("km-{}", &hex::encode(Sha256::digest(&json))[..12]);
        Ok(Self { rules, version })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn get(&self, rule_id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn severity_of(&self, rule_id: &str) -> Option<Severity> {
        self.get(rule_id).map(|r| r.severity)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rules).expect("rules always serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MapError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Loads a catalog (JSON array of rule objects) replacing the built-in one.
pub fn load_map(path: impl AsRef<Path>) -> Result<LoadedMap, MapError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MapError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_map(&text)
}

pub fn parse_map(text: &str) -> Result<LoadedMap, MapError> {
    let rules: Vec<Rule> = serde_json::from_str(text)?;
    let map = KnowledgeMap::new(rules)?;
    let mut warnings = Vec::new();
    if map.rules.len() != DEFAULT_RULE_COUNT {
        warnings.push(format!(
            "catalog has {} rules; the built-in catalog has {}",
            map.rules.len(),
            DEFAULT_RULE_COUNT
        ));
    }
    for rule in map.rules.iter().filter(|r| r.has_detector) {
        if !crate::analyzer::has_registered_detector(&rule.rule_id) {
            warnings.push(format!(
                "rule {} claims a detector but none is registered; it will be prompt-only",
                rule.rule_id
            ));
        }
    }
    for warning in &warnings {
        log::warn!("{warning}");
    }
    Ok(LoadedMap { map, warnings })
}

/// Renders the header plus one numbered `<rule_id> (<severity>): <description>`
/// line per rule, optionally restricted to `categories`.
pub fn render_context(map: &KnowledgeMap, categories: Option<&[Category]>) -> String {
    let mut out = String::from("Knowledge map: Python bug patterns and best practices to check");
    let selected = map
        .rules
        .iter()
        .filter(|r| categories.is_none_or(|cats| cats.contains(&r.category)));
    for (n, rule) in selected.enumerate() {
        out.push_str(&format!(
            "\n{}. {} ({}): {}",
            n + 1,
            rule.rule_id,
            rule.severity,
            rule.description
        ));
    }
    out
}

fn rule(id: &str, name: &str, category: Category, severity: Severity, detector: bool, description: &str) -> Rule {
    Rule {
        rule_id: id.to_string(),
        name: name.to_string(),
        category,
        description: description.to_string(),
        severity,
        has_detector: detector,
    }
}

/// The built-in 20-rule catalog.
pub fn default_map() -> KnowledgeMap {
    use Category::*;
    use Severity::*;
    let rules = vec![
        rule("KM-01", "Naming anti-patterns", Naming, Warning, true,
            "Ambiguous or misleading names (single-letter variables, overused data/temp/tmp/val/obj) can hide logical errors."),
        rule("KM-02", "Unreachable code", ControlFlow, Defect, true,
            "Statements after a return or raise in the same block, or after an infinite loop with no break, never execute."),
        rule("KM-03", "Error handling risks", ErrorHandling, Defect, true,
            "Bare except clauses, swallowed exceptions (handler body is only pass) and catching Exception instead of a specific type hide failures."),
        rule("KM-04", "Resource leaks", Resources, Defect, true,
            "File handles from open(), database connections and sockets must be closed or managed by a with block."),
        rule("KM-05", "Mutable default arguments", Semantics, Defect, true,
            "Mutable default arguments such as def f(x=[]) or def f(x={}) are shared across calls and cause unintended side effects."),
        rule("KM-06", "Shadowed builtins", Naming, Warning, false,
            "Assigning to builtin names such as list, dict, id, type or input shadows them for the rest of the scope."),
        rule("KM-07", "Wildcard imports", Style, Warning, false,
            "from module import * pollutes the namespace and hides where names come from."),
        rule("KM-08", "Identity comparison with literals", Semantics, Defect, false,
            "Comparing with is or is not against str, int or other literals tests identity, not equality; use == instead."),
        rule("KM-09", "String concatenation in loops", Style, Advice, false,
            "Building strings with += inside a loop is quadratic; collect parts and use str.join."),
        rule("KM-10", "Value returned from __init__", Semantics, Defect, false,
            "__init__ must return None; returning a value raises TypeError at instantiation."),
        rule("KM-11", "Deep nesting", ControlFlow, Advice, false,
            "More than four levels of nested blocks make control flow hard to follow; extract functions or return early."),
        rule("KM-12", "Magic numbers", Style, Advice, false,
            "Unexplained numeric literals in logic should be named constants."),
        rule("KM-13", "Unused variables and imports", Style, Warning, false,
            "Variables assigned but never read and unused imports often indicate a typo or leftover logic."),
        rule("KM-14", "Assert used for control flow", ErrorHandling, Warning, false,
            "assert statements are stripped under python -O and must not validate input or guard control flow."),
        rule("KM-15", "Global mutable state", Semantics, Warning, false,
            "Functions that mutate module-level state through global make behavior order-dependent and hard to test."),
        rule("KM-16", "Float equality comparison", Semantics, Warning, false,
            "Comparing floats with == is fragile; use math.isclose or an explicit tolerance."),
        rule("KM-17", "TODO-marked dead branches", ControlFlow, Advice, false,
            "Branches left as TODO placeholders or guarded by constant False conditions are dead or unfinished logic."),
        rule("KM-18", "Mixed return types", Semantics, Warning, false,
            "A function that returns a value on some paths and None or a different type on others surprises callers."),
        rule("KM-19", "Shadowed loop variables", Naming, Warning, false,
            "Reusing an outer variable as a loop target, or rebinding the loop variable inside the body, corrupts later uses."),
        rule("KM-20", "Missing encoding on open", Resources, Advice, false,
            "Text-mode open() without an explicit encoding depends on the platform locale."),
    ];
    KnowledgeMap::new(rules).expect("built-in catalog is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_shape() {
        let map = default_map();
        assert_eq!(map.rules().len(), 20);
        let ids: HashSet<_> = map.rules().iter().map(|r| &r.rule_id).collect();
        assert_eq!(ids.len(), 20);
        for id in ["KM-01", "KM-02", "KM-03", "KM-04", "KM-05"] {
            assert!(map.get(id).unwrap().has_detector, "{id}");
        }
        assert_eq!(map.rules().iter().filter(|r| r.has_detector).count(), 5);
        assert!(map
            .get("KM-05")
            .unwrap()
            .description
            .to_lowercase()
            .contains("mutable default argument"));
        assert_eq!(map.severity_of("KM-01"), Some(Severity::Warning));
        for id in ["KM-02", "KM-03", "KM-04", "KM-05"] {
            assert_eq!(map.severity_of(id), Some(Severity::Defect));
        }
    }

    #[test]
    fn render_default_has_header_plus_twenty_lines() {
        let text = render_context(&default_map(), None);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 21);
        assert!(lines[1].starts_with("1. KM-01 (warning): "));
        assert!(lines[20].starts_with("20. KM-20 (advice): "));
        assert_eq!(text, render_context(&default_map(), None));
    }

    #[test]
    fn render_filters_by_category() {
        let text = render_context(&default_map(), Some(&[Category::ErrorHandling]));
        let ids: Vec<_> = text
            .lines()
            .skip(1)
            .map(|l| l.split_whitespace().nth(1).unwrap())
            .collect();
        assert_eq!(ids, vec!["KM-03", "KM-14"]);
    }

    #[test]
    fn small_catalog_loads_with_warning() {
        let json = r#"[
            {"rule_id": "A", "name": "a", "category": "style", "description": "first", "severity": "advice", "has_detector": false},
            {"rule_id": "B", "name": "b", "category": "naming", "description": "second", "severity": "warning", "has_detector": false}
        ]"#;
        let loaded = parse_map(json).unwrap();
        assert_eq!(loaded.map.rules().len(), 2);
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn duplicate_and_empty_rejected() {
        let mut rules = default_map().rules().to_vec();
        rules[1].rule_id = "KM-01".into();
        assert!(matches!(KnowledgeMap::new(rules), Err(MapError::DuplicateId(id)) if id == "KM-01"));

        let mut rules = default_map().rules().to_vec();
        rules[3].description = "  ".into();
        assert!(matches!(KnowledgeMap::new(rules), Err(MapError::EmptyDescription(_))));

        let mut rules = default_map().rules().to_vec();
        rules[3].description = "two\nlines".into();
        assert!(matches!(
            KnowledgeMap::new(rules),
            Err(MapError::MultilineDescription(_))
        ));
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        default_map().save(&path).unwrap();
        let loaded = load_map(&path).unwrap();
        assert_eq!(loaded.map, default_map());
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn unknown_detector_claim_warns() {
        let json = r#"[{"rule_id": "X-1", "name": "x", "category": "style", "description": "d", "severity": "defect", "has_detector": true}]"#;
        let loaded = parse_map(json).unwrap();
        assert_eq!(loaded.warnings.len(), 2);
    }
}
