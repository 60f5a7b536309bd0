//! Detectors for KM-01 through KM-05.
//!
//! Each detector is a pure function over the syntax tree. Opaque regions are
//! never inspected.

use std::collections::{BTreeMap, HashSet};

use super::ast::*;
use super::{excerpt, Finding};

/// Single-letter names that are conventional and never flagged.
pub const NAMING_ALLOWED: &[&str] = &["i", "j", "k", "n", "_"];
/// Vague names flagged when they occur more than once in a scope.
pub const NAMING_DENIED: &[&str] = &["data", "temp", "tmp", "val", "obj"];
/// Callee names whose results must be closed.
pub const RESOURCE_CONSTRUCTORS: &[&str] = &["open", "connect", "socket", "urlopen", "create_connection"];

fn finding(tree: &SyntaxTree, rule_id: &str, line: usize, message: String) -> Finding {
    Finding {
        rule_id: rule_id.to_string(),
        line,
        excerpt: excerpt(tree, line),
        message,
    }
}

/// A function body or the module body, excluding nested function bodies.
struct Scope<'a> {
    params: &'a [Param],
    body: &'a [Stmt],
}

fn scopes(tree: &SyntaxTree) -> Vec<Scope<'_>> {
    let mut out = vec![Scope {
        params: &[],
        body: &tree.body,
    }];
    visit_stmts(&tree.body, &mut |s| {
        if let StmtKind::FunctionDef { params, body, .. } = &s.kind {
            out.push(Scope { params, body });
        }
    });
    out
}

/// Visits statements of one scope, skipping nested function bodies (class
/// bodies belong to the enclosing scope).
fn visit_scope<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for stmt in stmts {
        f(stmt);
        if matches!(stmt.kind, StmtKind::FunctionDef { .. }) {
            continue;
        }
        for block in stmt.blocks() {
            visit_scope(block, f);
        }
    }
}

/// Every expression owned by statements of one scope (lambdas included).
fn visit_scope_exprs<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Expr)) {
    visit_scope(stmts, &mut |stmt| {
        for expr in stmt.expressions() {
            expr.walk(f);
        }
    });
}

// ---- KM-01 ----

fn collect_target_names<'a>(target: &'a Expr, line: usize, out: &mut Vec<(&'a str, usize)>) {
    match &target.kind {
        ExprKind::Name(n) => out.push((n, line)),
        ExprKind::Tuple(items) | ExprKind::List(items) => {
            for item in items {
                collect_target_names(item, line, out);
            }
        }
        ExprKind::Starred(inner) => collect_target_names(inner, line, out),
        _ => {}
    }
}

struct Binding<'a> {
    name: &'a str,
    line: usize,
    in_handler: bool,
}

fn scope_bindings<'a>(scope: &Scope<'a>) -> Vec<Binding<'a>> {
    let mut out: Vec<Binding<'a>> = scope
        .params
        .iter()
        .map(|p| Binding {
            name: &p.name,
            line: p.span.line(),
            in_handler: false,
        })
        .collect();
    visit_scope(scope.body, &mut |stmt| {
        let mut names = Vec::new();
        let line = stmt.span.line();
        match &stmt.kind {
            StmtKind::Assign { targets, .. } => {
                for t in targets {
                    collect_target_names(t, t.span.line(), &mut names);
                }
            }
            StmtKind::AugAssign { target, .. } | StmtKind::AnnAssign { target, .. } => {
                collect_target_names(target, line, &mut names)
            }
            StmtKind::For { target, .. } => collect_target_names(target, line, &mut names),
            StmtKind::With { items, .. } => {
                for item in items {
                    if let Some(t) = &item.target {
                        collect_target_names(t, t.span.line(), &mut names);
                    }
                }
            }
            StmtKind::Try { handlers, .. } => {
                for h in handlers {
                    if let Some(name) = &h.name {
                        out.push(Binding {
                            name,
                            line: h.span.line(),
                            in_handler: true,
                        });
                    }
                }
            }
            _ => {}
        }
        out.extend(names.into_iter().map(|(name, line)| Binding {
            name,
            line,
            in_handler: false,
        }));
    });
    out
}

fn scope_loads<'a>(scope: &Scope<'a>) -> Vec<&'a str> {
    let mut bound_exprs: HashSet<*const Expr> = HashSet::new();
    visit_scope(scope.body, &mut |stmt| {
        let mut mark = |t: &Expr| {
            t.walk(&mut |e| {
                if matches!(e.kind, ExprKind::Name(_)) {
                    bound_exprs.insert(e as *const Expr);
                }
            })
        };
        match &stmt.kind {
            StmtKind::Assign { targets, .. } => targets.iter().for_each(&mut mark),
            StmtKind::AnnAssign { target, .. } | StmtKind::For { target, .. } => mark(target),
            StmtKind::With { items, .. } => items.iter().filter_map(|i| i.target.as_ref()).for_each(&mut mark),
            _ => {}
        }
    });
    let mut loads = Vec::new();
    visit_scope_exprs(scope.body, &mut |e| match &e.kind {
        ExprKind::Name(n) if !bound_exprs.contains(&(e as *const Expr)) => loads.push(n.as_str()),
        ExprKind::Constant(Constant::Str { names, .. }) => loads.extend(names.iter().map(String::as_str)),
        _ => {}
    });
    loads
}

/// KM-01: single-letter bindings outside the allow-list, and deny-listed
/// vague names that occur more than once in their scope.
pub fn detect_naming(tree: &SyntaxTree) -> Vec<Finding> {
    let mut findings = Vec::new();
    for scope in scopes(tree) {
        let bindings = scope_bindings(&scope);
        let loads = scope_loads(&scope);

        // First binding line per flagged name, in order of appearance.
        let mut flagged: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for b in &bindings {
            let single =
                b.name.chars().count() == 1 && !NAMING_ALLOWED.contains(&b.name) && !(b.in_handler && b.name == "e");
            let denied = NAMING_DENIED.contains(&b.name) && {
                let occurrences = bindings.iter().filter(|o| o.name == b.name).count()
                    + loads.iter().filter(|l| **l == b.name).count();
                occurrences > 1
            };
            if (single || denied) && !flagged.contains_key(b.name) {
                flagged.insert(b.name, b.line);
                order.push(b.name);
            }
        }
        for name in order {
            let line = flagged[name];
            let message = if name.chars().count() == 1 {
                format!("single-letter name `{name}` is ambiguous; use a descriptive name")
            } else {
                format!("vague name `{name}` is reused in this scope; name it after what it holds")
            };
            findings.push(finding(tree, "KM-01", line, message));
        }
    }
    findings
}

// ---- KM-02 ----

fn is_truthy_constant(expr: &Expr, tree: &SyntaxTree) -> bool {
    match &expr.kind {
        ExprKind::Constant(Constant::True) => true,
        ExprKind::Constant(Constant::Number) => {
            let text = &tree.source()[expr.span.start.offset..expr.span.end.offset];
            text.trim_start_matches('0')
                .chars()
                .any(|c| c.is_ascii_digit() && c != '0')
        }
        _ => false,
    }
}

/// Whether a `break` inside `body` targets the loop that owns `body`.
fn breaks_out(body: &[Stmt]) -> bool {
    body.iter().any(|stmt| match &stmt.kind {
        StmtKind::Break => true,
        StmtKind::For { orelse, .. } | StmtKind::While { orelse, .. } => breaks_out(orelse),
        StmtKind::FunctionDef { .. } | StmtKind::ClassDef { .. } => false,
        _ => stmt.blocks().into_iter().any(breaks_out),
    })
}

fn unreachable_in_block(tree: &SyntaxTree, block: &[Stmt], findings: &mut Vec<Finding>) {
    let mut terminator: Option<&str> = None;
    for stmt in block {
        if let Some(cause) = terminator {
            if !stmt.is_opaque() {
                findings.push(finding(
                    tree,
                    "KM-02",
                    stmt.span.line(),
                    format!("unreachable code: statement follows {cause}"),
                ));
                break;
            }
            continue;
        }
        terminator = match &stmt.kind {
            StmtKind::Return(_) => Some("a return"),
            StmtKind::Raise { .. } => Some("a raise"),
            StmtKind::While { test, body, .. } if is_truthy_constant(test, tree) && !breaks_out(body) => {
                Some("an infinite loop with no break")
            }
            _ => None,
        };
    }
    for stmt in block {
        for inner in stmt.blocks() {
            unreachable_in_block(tree, inner, findings);
        }
    }
}

/// KM-02: the first statement after a return/raise or after a `while True`
/// loop without a break, once per block.
pub fn detect_unreachable(tree: &SyntaxTree) -> Vec<Finding> {
    let mut findings = Vec::new();
    unreachable_in_block(tree, &tree.body, &mut findings);
    findings
}

// ---- KM-03 ----

fn is_swallowed(body: &[Stmt]) -> bool {
    !body.is_empty() && body.iter().all(|s| matches!(s.kind, StmtKind::Pass))
}

fn catches_exception_base(expr: &Expr) -> bool {
    match &expr.kind {
        ExprKind::Name(n) => n == "Exception" || n == "BaseException",
        ExprKind::Tuple(items) => items.iter().any(catches_exception_base),
        _ => false,
    }
}

/// KM-03: bare handlers, handlers that only `pass`, and `except Exception`
/// handlers that only `pass`.
pub fn detect_error_handling(tree: &SyntaxTree) -> Vec<Finding> {
    let mut findings = Vec::new();
    visit_stmts(&tree.body, &mut |stmt| {
        let StmtKind::Try { handlers, .. } = &stmt.kind else {
            return;
        };
        for h in handlers {
            let line = h.span.line();
            let swallowed = is_swallowed(&h.body);
            if h.exception.is_none() {
                findings.push(finding(
                    tree,
                    "KM-03",
                    line,
                    "bare except catches every exception, including KeyboardInterrupt and SystemExit".into(),
                ));
            }
            if swallowed {
                findings.push(finding(
                    tree,
                    "KM-03",
                    line,
                    "exception is swallowed: handler body is only pass".into(),
                ));
            }
            if swallowed && h.exception.as_ref().is_some_and(catches_exception_base) {
                findings.push(finding(
                    tree,
                    "KM-03",
                    line,
                    "overbroad catch: Exception is caught and ignored; catch the specific type".into(),
                ));
            }
        }
    });
    findings
}

// ---- KM-04 ----

fn is_resource_call(expr: &Expr) -> bool {
    match &expr.kind {
        ExprKind::Call { func, .. } => func.callee_tail().is_some_and(|n| RESOURCE_CONSTRUCTORS.contains(&n)),
        _ => false,
    }
}

fn closed_names<'a>(scope: &Scope<'a>) -> HashSet<&'a str> {
    let mut closed = HashSet::new();
    visit_scope_exprs(scope.body, &mut |e| {
        if let ExprKind::Call { func, .. } = &e.kind {
            if let ExprKind::Attribute { value, attr } = &func.kind {
                if attr == "close" {
                    if let Some(name) = value.name() {
                        closed.insert(name);
                    }
                }
            }
        }
    });
    closed
}

/// KM-04: a resource-constructor result bound to a name with no
/// `<name>.close()` anywhere in the same scope.
pub fn detect_resource_leak(tree: &SyntaxTree) -> Vec<Finding> {
    let mut findings = Vec::new();
    for scope in scopes(tree) {
        let closed = closed_names(&scope);
        visit_scope(scope.body, &mut |stmt| {
            let (targets, value): (Vec<&Expr>, &Expr) = match &stmt.kind {
                StmtKind::Assign { targets, value } => (targets.iter().collect(), value),
                StmtKind::AnnAssign {
                    target,
                    value: Some(value),
                    ..
                } => (vec![target], value),
                _ => return,
            };
            if !is_resource_call(value) {
                return;
            }
            for name in targets.iter().filter_map(|t| t.name()) {
                if !closed.contains(name) {
                    let callee = match &value.kind {
                        ExprKind::Call { func, .. } => func.callee_tail().unwrap_or("open"),
                        _ => "open",
                    };
                    findings.push(finding(
                        tree,
                        "KM-04",
                        stmt.span.line(),
                        format!("`{name}` from {callee}() is never closed; use a with block or call {name}.close()"),
                    ));
                }
            }
        });
    }
    findings.sort_by_key(|f| f.line);
    findings
}

// ---- KM-05 ----

fn is_mutable_default(expr: &Expr) -> bool {
    match &expr.kind {
        ExprKind::List(_) | ExprKind::Dict(_) | ExprKind::Set(_) => true,
        ExprKind::Comp { kind, .. } => *kind != CompKind::Generator,
        ExprKind::Call { func, .. } => matches!(func.name(), Some("list" | "dict" | "set")),
        _ => false,
    }
}

/// KM-05: parameter defaults that are list/dict/set displays or constructor calls.
pub fn detect_mutable_default(tree: &SyntaxTree) -> Vec<Finding> {
    let mut findings = Vec::new();
    visit_stmts(&tree.body, &mut |stmt| {
        let StmtKind::FunctionDef { name, params, .. } = &stmt.kind else {
            return;
        };
        for p in params {
            if p.default.as_ref().is_some_and(is_mutable_default) {
                findings.push(finding(
                    tree,
                    "KM-05",
                    p.span.line(),
                    format!(
                        "mutable default for `{}` in `{name}` is shared across calls; default to None and create it inside",
                        p.name
                    ),
                ));
            }
        }
    });
    findings
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn lines(detect: fn(&SyntaxTree) -> Vec<Finding>, src: &str) -> Vec<usize> {
        detect(&parse(src).unwrap()).iter().map(|f| f.line).collect()
    }

    #[test]
    fn naming_examples() {
        assert_eq!(lines(detect_naming, "def calc(d, t):\n    return d"), vec![1, 1]);
        assert!(lines(detect_naming, "for i in range(3):\n    pass").is_empty());
        assert_eq!(lines(detect_naming, "temp = 1\nprint(temp)"), vec![1]);
    }

    #[test]
    fn naming_counts_fstring_uses() {
        assert_eq!(lines(detect_naming, "tmp = 1\nprint(f\"{tmp}\")"), vec![1]);
    }

    #[test]
    fn naming_scopes_are_separate() {
        let src = "def a():\n    data = 1\ndef b():\n    return data";
        assert!(lines(detect_naming, src).is_empty());
    }

    #[test]
    fn unreachable_examples() {
        assert_eq!(lines(detect_unreachable, "def f():\n    return 1\n    x = 2"), vec![3]);
        assert_eq!(
            lines(detect_unreachable, "def f():\n    raise ValueError()\n    g()"),
            vec![3]
        );
        assert!(lines(detect_unreachable, "def f():\n    return 1").is_empty());
        assert_eq!(lines(detect_unreachable, "while 1:\n    pass\nx = 1"), vec![3]);
        assert!(lines(detect_unreachable, "while 0:\n    pass\nx = 1").is_empty());
    }

    #[test]
    fn error_handling_examples() {
        assert_eq!(
            lines(detect_error_handling, "try:\n    g()\nexcept:\n    pass").len(),
            2
        );
        assert!(lines(
            detect_error_handling,
            "try:\n    g()\nexcept ValueError as e:\n    raise"
        )
        .is_empty());
        let broad = detect_error_handling(&parse("try:\n    g()\nexcept Exception:\n    pass").unwrap());
        assert!(broad.iter().any(|f| f.message.starts_with("overbroad")));
    }

    #[test]
    fn resource_examples() {
        assert_eq!(lines(detect_resource_leak, "f = open(\"a\")\nf.read()"), vec![1]);
        assert!(lines(detect_resource_leak, "f = open(\"a\")\nf.close()").is_empty());
        assert!(lines(detect_resource_leak, "with open(\"a\") as f:\n    pass").is_empty());
    }

    #[test]
    fn mutable_default_examples() {
        assert_eq!(
            lines(detect_mutable_default, "def g(a, b={}, c=set()):\n    pass"),
            vec![1, 1]
        );
        assert!(lines(detect_mutable_default, "def f(x=()):\n    pass").is_empty());
        assert_eq!(lines(detect_mutable_default, "def f(x=[]):\n    pass"), vec![1]);
        assert_eq!(
            lines(detect_mutable_default, "def f(x=[i for i in y]):\n    pass"),
            vec![1]
        );
    }

    #[test]
    fn opaque_regions_are_ignored() {
        let src = "def f():\n    return 1\n    print \"x\"\n";
        assert!(lines(detect_unreachable, src).is_empty());
    }
}
