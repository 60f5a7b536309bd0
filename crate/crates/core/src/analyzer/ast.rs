//! Syntax tree for the supported Python subset.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize)]
pub struct Pos {
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub col: usize,
    /// Byte offset into the (newline-normalized) source.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start.offset <= other.start.offset && other.end.offset <= self.end.offset
    }

    pub fn line(&self) -> usize {
        self.start.line
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Normal,
    VarArgs,
    KwArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub annotation: Option<Expr>,
    pub default: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceptHandler {
    pub exception: Option<Expr>,
    pub name: Option<String>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithItem {
    pub context: Expr,
    pub target: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    FunctionDef {
        name: String,
        params: Vec<Param>,
        returns: Option<Expr>,
        decorators: Vec<Expr>,
        body: Vec<Stmt>,
    },
    ClassDef {
        name: String,
        bases: Vec<Arg>,
        decorators: Vec<Expr>,
        body: Vec<Stmt>,
    },
    If {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    While {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    For {
        target: Expr,
        iter: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    Try {
        body: Vec<Stmt>,
        handlers: Vec<ExceptHandler>,
        orelse: Vec<Stmt>,
        finalbody: Vec<Stmt>,
    },
    With {
        items: Vec<WithItem>,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Raise {
        exception: Option<Expr>,
        cause: Option<Expr>,
    },
    Assign {
        targets: Vec<Expr>,
        value: Expr,
    },
    AugAssign {
        target: Expr,
        value: Expr,
    },
    AnnAssign {
        target: Expr,
        annotation: Expr,
        value: Option<Expr>,
    },
    Expr(Expr),
    Import(Vec<String>),
    Global(Vec<String>),
    Delete(Vec<Expr>),
    Assert {
        test: Expr,
        message: Option<Expr>,
    },
    Pass,
    Break,
    Continue,
    /// A region the parser could not understand; it is skipped by detectors.
    Opaque,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Positional(Expr),
    Keyword(String, Expr),
    Star(Expr),
    DoubleStar(Expr),
}

impl Arg {
    pub fn value(&self) -> &Expr {
        match self {
            Arg::Positional(e) | Arg::Keyword(_, e) | Arg::Star(e) | Arg::DoubleStar(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompKind {
    List,
    Set,
    Dict,
    Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comprehension {
    pub target: Expr,
    pub iter: Expr,
    pub conditions: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    Number,
    /// `names` holds identifiers referenced from f-string replacement fields.
    Str {
        formatted: bool,
        names: Vec<String>,
    },
    True,
    False,
    None,
    Ellipsis,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(String),
    Constant(Constant),
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
    Set(Vec<Expr>),
    Dict(Vec<(Option<Expr>, Expr)>),
    Comp {
        kind: CompKind,
        element: Box<Expr>,
        /// Value of a dict comprehension; the key is `element`.
        value: Option<Box<Expr>>,
        generators: Vec<Comprehension>,
    },
    Call {
        func: Box<Expr>,
        args: Vec<Arg>,
    },
    Attribute {
        value: Box<Expr>,
        attr: String,
    },
    Subscript {
        value: Box<Expr>,
        index: Box<Expr>,
    },
    Slice(Vec<Option<Expr>>),
    /// Binary, boolean and comparison operators, flattened.
    Operation {
        op: String,
        operands: Vec<Expr>,
    },
    Unary {
        op: String,
        operand: Box<Expr>,
    },
    Lambda {
        params: Vec<Param>,
        body: Box<Expr>,
    },
    IfExp {
        test: Box<Expr>,
        body: Box<Expr>,
        orelse: Box<Expr>,
    },
    Starred(Box<Expr>),
    NamedExpr {
        target: Box<Expr>,
        value: Box<Expr>,
    },
    Await(Box<Expr>),
    Yield(Option<Box<Expr>>),
}

impl Expr {
    pub fn name(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Name(n) => Some(n),
            _ => None,
        }
    }

    /// Last segment of a dotted callee: `open`, `sqlite3.connect` -> `connect`.
    pub fn callee_tail(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Name(n) => Some(n),
            ExprKind::Attribute { attr, .. } => Some(attr),
            _ => None,
        }
    }

    /// Direct sub-expressions, in source order. Lambda bodies are included.
    pub fn children(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        match &self.kind {
            ExprKind::Name(_) | ExprKind::Constant(_) => {}
            ExprKind::List(items) | ExprKind::Tuple(items) | ExprKind::Set(items) => out.extend(items),
            ExprKind::Dict(pairs) => {
                for (k, v) in pairs {
                    out.extend(k.as_ref());
                    out.push(v);
                }
            }
            ExprKind::Comp {
                element,
                value,
                generators,
                ..
            } => {
                out.push(element);
                out.extend(value.as_deref());
                for g in generators {
                    out.push(&g.target);
                    out.push(&g.iter);
                    out.extend(&g.conditions);
                }
            }
            ExprKind::Call { func, args } => {
                out.push(func);
                out.extend(args.iter().map(Arg::value));
            }
            ExprKind::Attribute { value, .. } => out.push(value),
            ExprKind::Subscript { value, index } => {
                out.push(value);
                out.push(index);
            }
            ExprKind::Slice(parts) => out.extend(parts.iter().flatten()),
            ExprKind::Operation { operands, .. } => out.extend(operands),
            ExprKind::Unary { operand, .. } => out.push(operand),
            ExprKind::Lambda { params, body } => {
                for p in params {
                    out.extend(p.default.as_ref());
                }
                out.push(body);
            }
            ExprKind::IfExp { test, body, orelse } => {
                out.push(body);
                out.push(test);
                out.push(orelse);
            }
            ExprKind::Starred(e) | ExprKind::Await(e) => out.push(e),
            ExprKind::NamedExpr { target, value } => {
                out.push(target);
                out.push(value);
            }
            ExprKind::Yield(e) => out.extend(e.as_deref()),
        }
        out
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for child in self.children() {
            child.walk(f);
        }
    }
}

impl Stmt {
    /// Nested statement blocks, in source order.
    pub fn blocks(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::FunctionDef { body, .. } | StmtKind::ClassDef { body, .. } | StmtKind::With { body, .. } => {
                vec![body]
            }
            StmtKind::If { body, orelse, .. }
            | StmtKind::While { body, orelse, .. }
            | StmtKind::For { body, orelse, .. } => vec![body, orelse],
            StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            } => {
                let mut v: Vec<&[Stmt]> = vec![body];
                v.extend(handlers.iter().map(|h| h.body.as_slice()));
                v.push(orelse);
                v.push(finalbody);
                v
            }
            _ => Vec::new(),
        }
    }

    /// Expressions that belong to this statement itself (not to nested blocks).
    pub fn expressions(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        match &self.kind {
            StmtKind::FunctionDef {
                params,
                returns,
                decorators,
                ..
            } => {
                out.extend(decorators);
                for p in params {
                    out.extend(p.annotation.as_ref());
                    out.extend(p.default.as_ref());
                }
                out.extend(returns.as_ref());
            }
            StmtKind::ClassDef { bases, decorators, .. } => {
                out.extend(decorators);
                out.extend(bases.iter().map(Arg::value));
            }
            StmtKind::If { test, .. } | StmtKind::While { test, .. } => out.push(test),
            StmtKind::For { target, iter, .. } => {
                out.push(target);
                out.push(iter);
            }
            StmtKind::Try { handlers, .. } => {
                for h in handlers {
                    out.extend(h.exception.as_ref());
                }
            }
            StmtKind::With { items, .. } => {
                for item in items {
                    out.push(&item.context);
                    out.extend(item.target.as_ref());
                }
            }
            StmtKind::Return(value) => out.extend(value.as_ref()),
            StmtKind::Raise { exception, cause } => {
                out.extend(exception.as_ref());
                out.extend(cause.as_ref());
            }
            StmtKind::Assign { targets, value } => {
                out.extend(targets);
                out.push(value);
            }
            StmtKind::AugAssign { target, value } => {
                out.push(target);
                out.push(value);
            }
            StmtKind::AnnAssign {
                target,
                annotation,
                value,
            } => {
                out.push(target);
                out.push(annotation);
                out.extend(value.as_ref());
            }
            StmtKind::Expr(e) => out.push(e),
            StmtKind::Delete(targets) => out.extend(targets),
            StmtKind::Assert { test, message } => {
                out.push(test);
                out.extend(message.as_ref());
            }
            StmtKind::Import(_)
            | StmtKind::Global(_)
            | StmtKind::Pass
            | StmtKind::Break
            | StmtKind::Continue
            | StmtKind::Opaque => {}
        }
        out
    }

    pub fn is_opaque(&self) -> bool {
        matches!(self.kind, StmtKind::Opaque)
    }
}

/// Parsed module: top-level statements plus the normalized source they index.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxTree {
    pub body: Vec<Stmt>,
    pub(crate) source: String,
}

impl SyntaxTree {
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Text of a 1-based source line, without the newline.
    pub fn line_text(&self, line: usize) -> &str {
        self.source.lines().nth(line.saturating_sub(1)).unwrap_or("")
    }

    pub fn line_count(&self) -> usize {
        self.source.lines().count()
    }

    pub fn has_opaque(&self) -> bool {
        let mut found = false;
        visit_stmts(&self.body, &mut |s| found |= s.is_opaque());
        found
    }

    /// Uniform kind/span/children view of the tree.
    pub fn outline(&self) -> Node {
        let children: Vec<Node> = self.body.iter().map(stmt_node).collect();
        let span = children.iter().map(|c| c.span).reduce(Span::to).unwrap_or_default();
        Node {
            kind: NodeKind::Module,
            span,
            children,
        }
    }
}

/// Pre-order walk over every statement in `stmts`, descending into all blocks.
pub fn visit_stmts<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for stmt in stmts {
        f(stmt);
        for block in stmt.blocks() {
            visit_stmts(block, f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Module,
    FunctionDef,
    ClassDef,
    Parameter,
    ParameterWithDefault,
    TryBlock,
    ExceptHandler,
    WithBlock,
    Loop,
    If,
    Return,
    Raise,
    Assignment,
    Statement,
    Opaque,
    Call,
    Identifier,
    Expression,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub kind: NodeKind,
    pub span: Span,
    pub children: Vec<Node>,
}

impl Node {
    pub fn count(&self, kind: NodeKind) -> usize {
        usize::from(self.kind == kind) + self.children.iter().map(|c| c.count(kind)).sum::<usize>()
    }

    pub fn visit(&self, f: &mut impl FnMut(&Node, Option<&Node>)) {
        fn go<'a>(node: &'a Node, parent: Option<&'a Node>, f: &mut impl FnMut(&Node, Option<&Node>)) {
            f(node, parent);
            for c in &node.children {
                go(c, Some(node), f);
            }
        }
        go(self, None, f);
    }
}

fn block_nodes(stmts: &[Stmt]) -> impl Iterator<Item = Node> + '_ {
    stmts.iter().map(stmt_node)
}

fn stmt_node(stmt: &Stmt) -> Node {
    let kind = match &stmt.kind {
        StmtKind::FunctionDef { .. } => NodeKind::FunctionDef,
        StmtKind::ClassDef { .. } => NodeKind::ClassDef,
        StmtKind::If { .. } => NodeKind::If,
        StmtKind::While { .. } | StmtKind::For { .. } => NodeKind::Loop,
        StmtKind::Try { .. } => NodeKind::TryBlock,
        StmtKind::With { .. } => NodeKind::WithBlock,
        StmtKind::Return(_) => NodeKind::Return,
        StmtKind::Raise { .. } => NodeKind::Raise,
        StmtKind::Assign { .. } | StmtKind::AugAssign { .. } | StmtKind::AnnAssign { .. } => NodeKind::Assignment,
        StmtKind::Opaque => NodeKind::Opaque,
        _ => NodeKind::Statement,
    };
    let mut children = Vec::new();
    match &stmt.kind {
        StmtKind::FunctionDef {
            params,
            returns,
            decorators,
            body,
            ..
        } => {
            children.extend(decorators.iter().map(expr_node));
            for p in params {
                let mut kids: Vec<Node> = p.annotation.iter().map(expr_node).collect();
                kids.extend(p.default.iter().map(expr_node));
                children.push(Node {
                    kind: if p.default.is_some() {
                        NodeKind::ParameterWithDefault
                    } else {
                        NodeKind::Parameter
                    },
                    span: p.span,
                    children: kids,
                });
            }
            children.extend(returns.iter().map(expr_node));
            children.extend(block_nodes(body));
        }
        StmtKind::Try {
            body,
            handlers,
            orelse,
            finalbody,
        } => {
            children.extend(block_nodes(body));
            for h in handlers {
                let mut kids: Vec<Node> = h.exception.iter().map(expr_node).collect();
                kids.extend(block_nodes(&h.body));
                children.push(Node {
                    kind: NodeKind::ExceptHandler,
                    span: h.span,
                    children: kids,
                });
            }
            children.extend(block_nodes(orelse));
            children.extend(block_nodes(finalbody));
        }
        _ => {
            // Expressions precede nested blocks for every other statement.
            children.extend(stmt.expressions().into_iter().map(expr_node));
            for block in stmt.blocks() {
                children.extend(block_nodes(block));
            }
        }
    }
    Node {
        kind,
        span: stmt.span,
        children,
    }
}

fn expr_node(expr: &Expr) -> Node {
    let kind = match &expr.kind {
        ExprKind::Call { .. } => NodeKind::Call,
        ExprKind::Name(_) => NodeKind::Identifier,
        _ => NodeKind::Expression,
    };
    Node {
        kind,
        span: expr.span,
        children: expr.children().into_iter().map(expr_node).collect(),
    }
}
