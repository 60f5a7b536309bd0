//! Symbolic side of the review: parse Python source and run the
//! detector-backed knowledge-map rules over the tree.

mod ast;
mod detectors;
mod lexer;
mod parser;

pub use ast::{
    visit_stmts, Arg, CompKind, Constant, ExceptHandler, Expr, ExprKind, Node, NodeKind, Param, ParamKind, Pos, Span,
    Stmt, StmtKind, SyntaxTree, WithItem,
};
pub use detectors::{
    detect_error_handling, detect_mutable_default, detect_naming, detect_resource_leak, detect_unreachable,
    NAMING_ALLOWED, NAMING_DENIED, RESOURCE_CONSTRUCTORS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge_map::{KnowledgeMap, Severity};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: cannot tokenize: {message}")]
    Tokenize { line: usize, message: String },
    #[error("unparseable region at lines {start_line}-{end_line}")]
    Unparseable { start_line: usize, end_line: usize },
}

/// One concrete occurrence of a knowledge-map rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub line: usize,
    pub excerpt: String,
    pub message: String,
}

pub const EXCERPT_MAX_CHARS: usize = 120;

pub(crate) fn excerpt(tree: &SyntaxTree, line: usize) -> String {
    tree.line_text(line).trim().chars().take(EXCERPT_MAX_CHARS).collect()
}

/// Tolerant parse: unparseable statements become opaque nodes. Fails only
/// when the input cannot be tokenized at all (binary data).
pub fn parse(source: &str) -> Result<SyntaxTree, ParseError> {
    let normalized = source.replace("\r\n", "\n");
    let tokens = lexer::tokenize(&normalized)?;
    let body = parser::parse_module(&tokens);
    Ok(SyntaxTree {
        body,
        source: normalized,
    })
}

/// Strict parse: any opaque region is an error.
pub fn parse_strict(source: &str) -> Result<SyntaxTree, ParseError> {
    let tree = parse(source)?;
    let mut first = None;
    visit_stmts(&tree.body, &mut |s| {
        if s.is_opaque() && first.is_none() {
            first = Some(s.span);
        }
    });
    match first {
        Some(span) => Err(ParseError::Unparseable {
            start_line: span.start.line,
            end_line: span.end.line,
        }),
        None => Ok(tree),
    }
}

type Detector = fn(&SyntaxTree) -> Vec<Finding>;

const REGISTRY: &[(&str, Detector)] = &[
    ("KM-01", detect_naming),
    ("KM-02", detect_unreachable),
    ("KM-03", detect_error_handling),
    ("KM-04", detect_resource_leak),
    ("KM-05", detect_mutable_default),
];

pub fn has_registered_detector(rule_id: &str) -> bool {
    REGISTRY.iter().any(|(id, _)| *id == rule_id)
}

pub fn registered_rule_ids() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(id, _)| *id)
}

/// Runs every detector whose rule is present in `map` with `has_detector`.
/// Output is sorted by `(line, rule_id)`.
pub fn run_detectors(tree: &SyntaxTree, map: &KnowledgeMap) -> Vec<Finding> {
    let mut findings: Vec<Finding> = REGISTRY
        .iter()
        .filter(|(id, _)| map.get(id).is_some_and(|r| r.has_detector))
        .flat_map(|(_, detect)| detect(tree))
        .collect();
    findings.sort_by(|a, b| (a.line, &a.rule_id).cmp(&(b.line, &b.rule_id)));
    findings
}

/// Tolerant analysis. Never fails: untokenizable input yields no findings and
/// a log note.
pub fn analyze(source: &str, map: &KnowledgeMap) -> Vec<Finding> {
    match parse(source) {
        Ok(tree) => {
            if tree.has_opaque() {
                log::info!("analyze: some regions could not be parsed and were skipped");
            }
            run_detectors(&tree, map)
        }
        Err(err) => {
            log::warn!("analyze: {err}; no findings produced");
            Vec::new()
        }
    }
}

pub fn analyze_strict(source: &str, map: &KnowledgeMap) -> Result<Vec<Finding>, ParseError> {
    let tree = parse_strict(source)?;
    Ok(run_detectors(&tree, map))
}

/// True when any finding maps to a `Defect`-severity rule in `map`.
pub fn has_defect(findings: &[Finding], map: &KnowledgeMap) -> bool {
    findings
        .iter()
        .any(|f| map.severity_of(&f.rule_id) == Some(Severity::Defect))
}
