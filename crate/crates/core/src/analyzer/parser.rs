//! Recursive-descent parser over [`lexer`](super::lexer) tokens.
//!
//! Recovery is per statement: a statement that fails to parse becomes an
//! [`StmtKind::Opaque`] node covering its logical line and any indented block
//! that follows, and parsing resumes at the next statement of the same block.

use super::ast::*;
use super::lexer::{Tok, Token};

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

#[derive(Debug)]
struct Fail;

type PResult<T> = Result<T, Fail>;

pub(super) fn parse_module(tokens: &[Token]) -> Vec<Stmt> {
    let mut parser = Parser { toks: tokens, pos: 0 };
    let mut body = Vec::new();
    loop {
        match parser.tok() {
            Tok::End => break,
            Tok::Newline | Tok::Indent | Tok::Dedent => parser.pos += 1,
            _ => body.extend(parser.statement_recovering()),
        }
    }
    body
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn tok(&self) -> &'a Tok {
        &self.toks[self.pos.min(self.toks.len() - 1)].tok
    }

    fn tok_at(&self, ahead: usize) -> &'a Tok {
        &self.toks[(self.pos + ahead).min(self.toks.len() - 1)].tok
    }

    fn start(&self) -> Pos {
        self.toks[self.pos.min(self.toks.len() - 1)].span.start
    }

    /// End of the last consumed token that is not layout.
    fn last_end(&self) -> Pos {
        self.toks[..self.pos]
            .iter()
            .rev()
            .find(|t| !matches!(t.tok, Tok::Newline | Tok::Indent | Tok::Dedent))
            .map(|t| t.span.end)
            .unwrap_or_else(|| self.start())
    }

    fn span_from(&self, start: Pos) -> Span {
        Span {
            start,
            end: self.last_end().max(start),
        }
    }

    fn advance(&mut self) {
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.tok(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.tok(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        let hit = self.is_op(op);
        if hit {
            self.advance();
        }
        hit
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(Fail)
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(Fail)
        }
    }

    fn identifier(&mut self) -> PResult<String> {
        match self.tok() {
            Tok::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                let n = n.clone();
                self.advance();
                Ok(n)
            }
            _ => Err(Fail),
        }
    }

    // ---- statements ----

    fn statement_recovering(&mut self) -> Vec<Stmt> {
        let begin = self.pos;
        match self.statement() {
            Ok(stmts) => stmts,
            Err(Fail) => {
                self.pos = begin;
                let start = self.start();
                while !matches!(self.tok(), Tok::Newline | Tok::End) {
                    self.advance();
                }
                self.eat_newline();
                if matches!(self.tok(), Tok::Indent) {
                    let mut depth = 0usize;
                    loop {
                        match self.tok() {
                            Tok::Indent => depth += 1,
                            Tok::Dedent => depth -= 1,
                            Tok::End => break,
                            _ => {}
                        }
                        self.advance();
                        if depth == 0 {
                            break;
                        }
                    }
                }
                if self.pos == begin {
                    self.advance();
                }
                let span = self.span_from(start);
                log::debug!("opaque region at lines {}-{}", span.start.line, span.end.line);
                vec![Stmt {
                    kind: StmtKind::Opaque,
                    span,
                }]
            }
        }
    }

    fn eat_newline(&mut self) {
        if matches!(self.tok(), Tok::Newline) {
            self.advance();
        }
    }

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        let start = self.start();
        if self.is_op("@") {
            let mut decorators = Vec::new();
            while self.eat_op("@") {
                decorators.push(self.namedexpr_test()?);
                if !matches!(self.tok(), Tok::Newline) {
                    return Err(Fail);
                }
                self.advance();
            }
            self.eat_kw("async");
            let mut stmt = if self.is_kw("def") {
                self.funcdef(start)?
            } else if self.is_kw("class") {
                self.classdef(start)?
            } else {
                return Err(Fail);
            };
            match &mut stmt.kind {
                StmtKind::FunctionDef { decorators: d, .. } | StmtKind::ClassDef { decorators: d, .. } => {
                    *d = decorators
                }
                _ => unreachable!(),
            }
            return Ok(vec![stmt]);
        }
        if self.is_kw("async") && matches!(self.tok_at(1), Tok::Name(n) if n == "def" || n == "for" || n == "with") {
            self.advance();
        }
        let stmt = match self.tok() {
            Tok::Name(n) => match n.as_str() {
                "def" => self.funcdef(start)?,
                "class" => self.classdef(start)?,
                "if" => {
                    self.advance();
                    self.if_rest(start)?
                }
                "while" => self.while_stmt(start)?,
                "for" => self.for_stmt(start)?,
                "try" => self.try_stmt(start)?,
                "with" => self.with_stmt(start)?,
                _ => return self.simple_statements(),
            },
            _ => return self.simple_statements(),
        };
        Ok(vec![stmt])
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if !matches!(self.tok(), Tok::Newline) {
            return self.simple_statements();
        }
        self.advance();
        if !matches!(self.tok(), Tok::Indent) {
            return Err(Fail);
        }
        self.advance();
        let mut body = Vec::new();
        // Over-indented lines are parsed inline; their dedents are swallowed.
        let mut extra = 0usize;
        loop {
            match self.tok() {
                Tok::Dedent if extra > 0 => {
                    extra -= 1;
                    self.advance();
                }
                Tok::Dedent => {
                    self.advance();
                    break;
                }
                Tok::End => break,
                Tok::Newline => self.advance(),
                Tok::Indent => {
                    extra += 1;
                    self.advance();
                }
                _ => body.extend(self.statement_recovering()),
            }
        }
        Ok(body)
    }

    fn funcdef(&mut self, start: Pos) -> PResult<Stmt> {
        self.expect_kw("def")?;
        let name = self.identifier()?;
        self.expect_op("(")?;
        let params = self.params(")", true)?;
        self.expect_op(")")?;
        let returns = if self.eat_op("->") { Some(self.test()?) } else { None };
        let body = self.block()?;
        Ok(Stmt {
            kind: StmtKind::FunctionDef {
                name,
                params,
                returns,
                decorators: Vec::new(),
                body,
            },
            span: self.span_from(start),
        })
    }

    fn params(&mut self, close: &str, annotations: bool) -> PResult<Vec<Param>> {
        let mut params = Vec::new();
        while !self.is_op(close) {
            let start = self.start();
            if self.eat_op("/") {
                // positional-only marker
            } else if self.eat_op("**") {
                let name = self.identifier()?;
                let annotation = self.param_annotation(annotations)?;
                params.push(Param {
                    name,
                    kind: ParamKind::KwArgs,
                    annotation,
                    default: None,
                    span: self.span_from(start),
                });
            } else if self.eat_op("*") {
                if !(self.is_op(",") || self.is_op(close)) {
                    let name = self.identifier()?;
                    let annotation = self.param_annotation(annotations)?;
                    params.push(Param {
                        name,
                        kind: ParamKind::VarArgs,
                        annotation,
                        default: None,
                        span: self.span_from(start),
                    });
                }
            } else {
                let name = self.identifier()?;
                let annotation = self.param_annotation(annotations)?;
                let default = if self.eat_op("=") { Some(self.test()?) } else { None };
                params.push(Param {
                    name,
                    kind: ParamKind::Normal,
                    annotation,
                    default,
                    span: self.span_from(start),
                });
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    fn param_annotation(&mut self, allowed: bool) -> PResult<Option<Expr>> {
        if allowed && self.eat_op(":") {
            Ok(Some(self.test()?))
        } else {
            Ok(None)
        }
    }

    fn classdef(&mut self, start: Pos) -> PResult<Stmt> {
        self.expect_kw("class")?;
        let name = self.identifier()?;
        let bases = if self.eat_op("(") {
            let args = self.call_args()?;
            self.expect_op(")")?;
            args
        } else {
            Vec::new()
        };
        let body = self.block()?;
        Ok(Stmt {
            kind: StmtKind::ClassDef {
                name,
                bases,
                decorators: Vec::new(),
                body,
            },
            span: self.span_from(start),
        })
    }

    /// Parses after the `if`/`elif` keyword.
    fn if_rest(&mut self, start: Pos) -> PResult<Stmt> {
        let test = self.namedexpr_test()?;
        let body = self.block()?;
        let orelse = if self.is_kw("elif") {
            let elif_start = self.start();
            self.advance();
            vec![self.if_rest(elif_start)?]
        } else if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        Ok(Stmt {
            kind: StmtKind::If { test, body, orelse },
            span: self.span_from(start),
        })
    }

    fn while_stmt(&mut self, start: Pos) -> PResult<Stmt> {
        self.expect_kw("while")?;
        let test = self.namedexpr_test()?;
        let body = self.block()?;
        let orelse = if self.eat_kw("else") { self.block()? } else { Vec::new() };
        Ok(Stmt {
            kind: StmtKind::While { test, body, orelse },
            span: self.span_from(start),
        })
    }

    fn for_stmt(&mut self, start: Pos) -> PResult<Stmt> {
        self.expect_kw("for")?;
        let target = self.target_list()?;
        self.expect_kw("in")?;
        let iter = self.testlist_star()?;
        let body = self.block()?;
        let orelse = if self.eat_kw("else") { self.block()? } else { Vec::new() };
        Ok(Stmt {
            kind: StmtKind::For {
                target,
                iter,
                body,
                orelse,
            },
            span: self.span_from(start),
        })
    }

    fn try_stmt(&mut self, start: Pos) -> PResult<Stmt> {
        self.expect_kw("try")?;
        let body = self.block()?;
        let mut handlers = Vec::new();
        while self.is_kw("except") {
            let handler_start = self.start();
            self.advance();
            self.eat_op("*");
            let (exception, name) = if self.is_op(":") {
                (None, None)
            } else {
                let exception = self.test()?;
                let name = if self.eat_kw("as") {
                    Some(self.identifier()?)
                } else if self.eat_op(",") {
                    // Python 2 `except E, e:`
                    Some(self.identifier()?)
                } else {
                    None
                };
                (Some(exception), name)
            };
            let body = self.block()?;
            handlers.push(ExceptHandler {
                exception,
                name,
                body,
                span: self.span_from(handler_start),
            });
        }
        let orelse = if self.eat_kw("else") { self.block()? } else { Vec::new() };
        let finalbody = if self.eat_kw("finally") {
            self.block()?
        } else {
            Vec::new()
        };
        if handlers.is_empty() && finalbody.is_empty() {
            return Err(Fail);
        }
        Ok(Stmt {
            kind: StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            },
            span: self.span_from(start),
        })
    }

    fn with_stmt(&mut self, start: Pos) -> PResult<Stmt> {
        self.expect_kw("with")?;
        let items = if self.is_op("(") {
            let save = self.pos;
            match self.parenthesized_with_items() {
                Ok(items) => items,
                Err(Fail) => {
                    self.pos = save;
                    self.with_items()?
                }
            }
        } else {
            self.with_items()?
        };
        let body = self.block()?;
        Ok(Stmt {
            kind: StmtKind::With { items, body },
            span: self.span_from(start),
        })
    }

    fn parenthesized_with_items(&mut self) -> PResult<Vec<WithItem>> {
        self.expect_op("(")?;
        let items = self.with_items()?;
        self.eat_op(",");
        self.expect_op(")")?;
        if !self.is_op(":") {
            return Err(Fail);
        }
        Ok(items)
    }

    fn with_items(&mut self) -> PResult<Vec<WithItem>> {
        let mut items = Vec::new();
        loop {
            let context = self.test()?;
            let target = if self.eat_kw("as") { Some(self.target()?) } else { None };
            items.push(WithItem { context, target });
            if !self.is_op(",") || matches!(self.tok_at(1), Tok::Op(")")) {
                break;
            }
            self.advance();
        }
        Ok(items)
    }

    fn simple_statements(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = vec![self.small_statement()?];
        while self.eat_op(";") {
            if matches!(self.tok(), Tok::Newline | Tok::End) {
                break;
            }
            out.push(self.small_statement()?);
        }
        match self.tok() {
            Tok::Newline => {
                self.advance();
                Ok(out)
            }
            Tok::End => Ok(out),
            _ => Err(Fail),
        }
    }

    fn at_statement_end(&self) -> bool {
        matches!(self.tok(), Tok::Newline | Tok::End) || self.is_op(";")
    }

    fn small_statement(&mut self) -> PResult<Stmt> {
        let start = self.start();
        let kind = match self.tok() {
            Tok::Name(n) => match n.as_str() {
                "pass" => {
                    self.advance();
                    StmtKind::Pass
                }
                "break" => {
                    self.advance();
                    StmtKind::Break
                }
                "continue" => {
                    self.advance();
                    StmtKind::Continue
                }
                "return" => {
                    self.advance();
                    let value = if self.at_statement_end() {
                        None
                    } else {
                        Some(self.testlist_star()?)
                    };
                    StmtKind::Return(value)
                }
                "raise" => {
                    self.advance();
                    let exception = if self.at_statement_end() {
                        None
                    } else {
                        Some(self.test()?)
                    };
                    let cause = if exception.is_some() && self.eat_kw("from") {
                        Some(self.test()?)
                    } else {
                        None
                    };
                    StmtKind::Raise { exception, cause }
                }
                "global" | "nonlocal" => {
                    self.advance();
                    let mut names = vec![self.identifier()?];
                    while self.eat_op(",") {
                        names.push(self.identifier()?);
                    }
                    StmtKind::Global(names)
                }
                "del" => {
                    self.advance();
                    let mut targets = vec![self.bitor()?];
                    while self.eat_op(",") && !self.at_statement_end() {
                        targets.push(self.bitor()?);
                    }
                    StmtKind::Delete(targets)
                }
                "assert" => {
                    self.advance();
                    let test = self.test()?;
                    let message = if self.eat_op(",") { Some(self.test()?) } else { None };
                    StmtKind::Assert { test, message }
                }
                "import" | "from" => StmtKind::Import(self.import_names()?),
                _ => self.expression_statement()?,
            },
            _ => self.expression_statement()?,
        };
        Ok(Stmt {
            kind,
            span: self.span_from(start),
        })
    }

    fn import_names(&mut self) -> PResult<Vec<String>> {
        let from = self.is_kw("from");
        self.advance();
        let mut names = Vec::new();
        let mut seen_import = !from;
        while !self.at_statement_end() {
            match self.tok() {
                Tok::Name(n) if n == "import" => seen_import = true,
                Tok::Name(n) if n == "as" => {}
                Tok::Name(n) if seen_import => names.push(n.clone()),
                Tok::Name(_) => {}
                Tok::Op("." | "," | "(" | ")" | "*" | "...") => {}
                _ => return Err(Fail),
            }
            self.advance();
        }
        if !seen_import {
            return Err(Fail);
        }
        Ok(names)
    }

    fn expression_statement(&mut self) -> PResult<StmtKind> {
        let first = if self.is_kw("yield") {
            self.yield_expr()?
        } else {
            self.testlist_star()?
        };
        if self.eat_op(":") {
            let annotation = self.test()?;
            let value = if self.eat_op("=") {
                Some(self.assign_value()?)
            } else {
                None
            };
            return Ok(StmtKind::AnnAssign {
                target: first,
                annotation,
                value,
            });
        }
        if let Tok::Op(op) = self.tok() {
            if op.len() >= 2 && op.ends_with('=') && !matches!(*op, "==" | "<=" | ">=" | "!=") {
                self.advance();
                let value = self.assign_value()?;
                return Ok(StmtKind::AugAssign { target: first, value });
            }
        }
        if self.is_op("=") {
            let mut chain = vec![first];
            while self.eat_op("=") {
                chain.push(self.assign_value()?);
            }
            let value = chain.pop().expect("at least two entries");
            return Ok(StmtKind::Assign { targets: chain, value });
        }
        Ok(StmtKind::Expr(first))
    }

    fn assign_value(&mut self) -> PResult<Expr> {
        if self.is_kw("yield") {
            self.yield_expr()
        } else {
            self.testlist_star()
        }
    }

    // ---- expressions ----

    fn yield_expr(&mut self) -> PResult<Expr> {
        let start = self.start();
        self.expect_kw("yield")?;
        self.eat_kw("from");
        let value = if self.at_statement_end() || self.is_op(")") || self.is_op("=") {
            None
        } else {
            Some(Box::new(self.testlist_star()?))
        };
        Ok(Expr {
            kind: ExprKind::Yield(value),
            span: self.span_from(start),
        })
    }

    /// `test|star_expr (, ...)* [,]`, producing a tuple when a comma appears.
    fn testlist_star(&mut self) -> PResult<Expr> {
        let start = self.start();
        let first = self.star_or_test()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_statement_end() || self.is_op("=") || self.is_op(":") || self.is_op(")") {
                break;
            }
            items.push(self.star_or_test()?);
        }
        Ok(Expr {
            kind: ExprKind::Tuple(items),
            span: self.span_from(start),
        })
    }

    fn star_or_test(&mut self) -> PResult<Expr> {
        if self.is_op("*") {
            let start = self.start();
            self.advance();
            let inner = self.bitor()?;
            return Ok(Expr {
                kind: ExprKind::Starred(Box::new(inner)),
                span: self.span_from(start),
            });
        }
        self.namedexpr_test()
    }

    /// Loop and comprehension targets: stops before `in`.
    fn target_list(&mut self) -> PResult<Expr> {
        let start = self.start();
        let first = self.target()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_kw("in") || self.is_op("=") {
                break;
            }
            items.push(self.target()?);
        }
        Ok(Expr {
            kind: ExprKind::Tuple(items),
            span: self.span_from(start),
        })
    }

    fn target(&mut self) -> PResult<Expr> {
        if self.is_op("*") {
            let start = self.start();
            self.advance();
            let inner = self.bitor()?;
            return Ok(Expr {
                kind: ExprKind::Starred(Box::new(inner)),
                span: self.span_from(start),
            });
        }
        self.bitor()
    }

    fn namedexpr_test(&mut self) -> PResult<Expr> {
        let start = self.start();
        let target = self.test()?;
        if self.eat_op(":=") {
            let value = self.test()?;
            return Ok(Expr {
                kind: ExprKind::NamedExpr {
                    target: Box::new(target),
                    value: Box::new(value),
                },
                span: self.span_from(start),
            });
        }
        Ok(target)
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        let start = self.start();
        let body = self.or_test()?;
        if self.is_kw("if") {
            let save = self.pos;
            self.advance();
            let Ok(test) = self.or_test() else {
                self.pos = save;
                return Ok(body);
            };
            if !self.eat_kw("else") {
                // Comprehension condition, not a conditional expression.
                self.pos = save;
                return Ok(body);
            }
            let orelse = self.test()?;
            return Ok(Expr {
                kind: ExprKind::IfExp {
                    test: Box::new(test),
                    body: Box::new(body),
                    orelse: Box::new(orelse),
                },
                span: self.span_from(start),
            });
        }
        Ok(body)
    }

    fn lambda(&mut self) -> PResult<Expr> {
        let start = self.start();
        self.expect_kw("lambda")?;
        let params = self.params(":", false)?;
        self.expect_op(":")?;
        let body = self.test()?;
        Ok(Expr {
            kind: ExprKind::Lambda {
                params,
                body: Box::new(body),
            },
            span: self.span_from(start),
        })
    }

    fn operation(&self, op: &str, operands: Vec<Expr>, start: Pos) -> Expr {
        Expr {
            kind: ExprKind::Operation {
                op: op.to_string(),
                operands,
            },
            span: self.span_from(start),
        }
    }

    fn or_test(&mut self) -> PResult<Expr> {
        let start = self.start();
        let mut left = self.and_test()?;
        while self.eat_kw("or") {
            let right = self.and_test()?;
            left = self.operation("or", vec![left, right], start);
        }
        Ok(left)
    }

    fn and_test(&mut self) -> PResult<Expr> {
        let start = self.start();
        let mut left = self.not_test()?;
        while self.eat_kw("and") {
            let right = self.not_test()?;
            left = self.operation("and", vec![left, right], start);
        }
        Ok(left)
    }

    fn not_test(&mut self) -> PResult<Expr> {
        if self.is_kw("not") {
            let start = self.start();
            self.advance();
            let operand = self.not_test()?;
            return Ok(Expr {
                kind: ExprKind::Unary {
                    op: "not".into(),
                    operand: Box::new(operand),
                },
                span: self.span_from(start),
            });
        }
        self.comparison()
    }

    fn comparison_op(&mut self) -> Option<&'static str> {
        let op = match self.tok() {
            Tok::Op(o @ ("<" | ">" | "==" | ">=" | "<=" | "!=")) => *o,
            Tok::Name(n) if n == "in" => "in",
            Tok::Name(n) if n == "is" => {
                if matches!(self.tok_at(1), Tok::Name(m) if m == "not") {
                    self.advance();
                    self.advance();
                    return Some("is not");
                }
                "is"
            }
            Tok::Name(n) if n == "not" && matches!(self.tok_at(1), Tok::Name(m) if m == "in") => {
                self.advance();
                self.advance();
                return Some("not in");
            }
            _ => return None,
        };
        self.advance();
        Some(op)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let start = self.start();
        let first = self.bitor()?;
        let mut operands = vec![first];
        let mut ops = Vec::new();
        while let Some(op) = self.comparison_op() {
            ops.push(op);
            operands.push(self.bitor()?);
        }
        if ops.is_empty() {
            return Ok(operands.pop().expect("one operand"));
        }
        Ok(self.operation(&ops.join(" "), operands, start))
    }

    fn binary(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let start = self.start();
        let mut left = next(self)?;
        while let Tok::Op(op) = self.tok() {
            if !ops.contains(op) {
                break;
            }
            self.advance();
            let right = next(self)?;
            left = self.operation(op, vec![left, right], start);
        }
        Ok(left)
    }

    fn bitor(&mut self) -> PResult<Expr> {
        self.binary(&["|"], Self::bitxor)
    }

    fn bitxor(&mut self) -> PResult<Expr> {
        self.binary(&["^"], Self::bitand)
    }

    fn bitand(&mut self) -> PResult<Expr> {
        self.binary(&["&"], Self::shift)
    }

    fn shift(&mut self) -> PResult<Expr> {
        self.binary(&["<<", ">>"], Self::arith)
    }

    fn arith(&mut self) -> PResult<Expr> {
        self.binary(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Expr> {
        self.binary(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Expr> {
        if let Tok::Op(op @ ("+" | "-" | "~")) = self.tok() {
            let start = self.start();
            self.advance();
            let operand = self.factor()?;
            return Ok(Expr {
                kind: ExprKind::Unary {
                    op: (*op).to_string(),
                    operand: Box::new(operand),
                },
                span: self.span_from(start),
            });
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let start = self.start();
        let base = if self.is_kw("await") {
            self.advance();
            let inner = self.primary()?;
            Expr {
                kind: ExprKind::Await(Box::new(inner)),
                span: self.span_from(start),
            }
        } else {
            self.primary()?
        };
        if self.eat_op("**") {
            let exponent = self.factor()?;
            return Ok(self.operation("**", vec![base, exponent], start));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.start();
        let mut expr = self.atom()?;
        loop {
            if self.eat_op("(") {
                let args = self.call_args()?;
                self.expect_op(")")?;
                expr = Expr {
                    kind: ExprKind::Call {
                        func: Box::new(expr),
                        args,
                    },
                    span: self.span_from(start),
                };
            } else if self.eat_op("[") {
                let index = self.subscript_list()?;
                self.expect_op("]")?;
                expr = Expr {
                    kind: ExprKind::Subscript {
                        value: Box::new(expr),
                        index: Box::new(index),
                    },
                    span: self.span_from(start),
                };
            } else if self.eat_op(".") {
                let attr = match self.tok() {
                    Tok::Name(n) => n.clone(),
                    _ => return Err(Fail),
                };
                self.advance();
                expr = Expr {
                    kind: ExprKind::Attribute {
                        value: Box::new(expr),
                        attr,
                    },
                    span: self.span_from(start),
                };
            } else {
                return Ok(expr);
            }
        }
    }

    fn call_args(&mut self) -> PResult<Vec<Arg>> {
        let mut args = Vec::new();
        while !self.is_op(")") {
            if self.eat_op("**") {
                args.push(Arg::DoubleStar(self.test()?));
            } else if self.eat_op("*") {
                args.push(Arg::Star(self.test()?));
            } else if matches!(self.tok(), Tok::Name(_)) && matches!(self.tok_at(1), Tok::Op("=")) {
                let name = self.identifier()?;
                self.advance();
                args.push(Arg::Keyword(name, self.test()?));
            } else {
                let start = self.start();
                let value = self.namedexpr_test()?;
                if self.is_kw("for") || self.is_kw("async") {
                    let generators = self.comprehension_clauses()?;
                    args.push(Arg::Positional(Expr {
                        kind: ExprKind::Comp {
                            kind: CompKind::Generator,
                            element: Box::new(value),
                            value: None,
                            generators,
                        },
                        span: self.span_from(start),
                    }));
                } else {
                    args.push(Arg::Positional(value));
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(args)
    }

    fn subscript_list(&mut self) -> PResult<Expr> {
        let start = self.start();
        let first = self.subscript()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            items.push(self.subscript()?);
        }
        Ok(Expr {
            kind: ExprKind::Tuple(items),
            span: self.span_from(start),
        })
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let start = self.start();
        let lower = if self.is_op(":") {
            None
        } else {
            Some(self.star_or_test()?)
        };
        if !self.is_op(":") {
            return lower.ok_or(Fail);
        }
        let mut parts = vec![lower];
        while self.eat_op(":") {
            if self.is_op(":") || self.is_op("]") || self.is_op(",") {
                parts.push(None);
            } else {
                parts.push(Some(self.test()?));
            }
        }
        Ok(Expr {
            kind: ExprKind::Slice(parts),
            span: self.span_from(start),
        })
    }

    fn comprehension_clauses(&mut self) -> PResult<Vec<Comprehension>> {
        let mut generators = Vec::new();
        loop {
            self.eat_kw("async");
            if !self.eat_kw("for") {
                break;
            }
            let target = self.target_list()?;
            self.expect_kw("in")?;
            let iter = self.or_test()?;
            let mut conditions = Vec::new();
            while self.eat_kw("if") {
                conditions.push(self.or_test()?);
            }
            generators.push(Comprehension {
                target,
                iter,
                conditions,
            });
        }
        if generators.is_empty() {
            return Err(Fail);
        }
        Ok(generators)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let start = self.start();
        let kind = match self.tok() {
            Tok::Name(n) => {
                let kind = match n.as_str() {
                    "True" => ExprKind::Constant(Constant::True),
                    "False" => ExprKind::Constant(Constant::False),
                    "None" => ExprKind::Constant(Constant::None),
                    n if KEYWORDS.contains(&n) => return Err(Fail),
                    n => ExprKind::Name(n.to_string()),
                };
                self.advance();
                kind
            }
            Tok::Number => {
                self.advance();
                ExprKind::Constant(Constant::Number)
            }
            Tok::Str { .. } => {
                let mut formatted = false;
                let mut names = Vec::new();
                while let Tok::Str { prefix, body } = self.tok() {
                    if prefix.contains('f') {
                        formatted = true;
                        names.extend(fstring_names(body));
                    }
                    self.advance();
                }
                ExprKind::Constant(Constant::Str { formatted, names })
            }
            Tok::Op("...") => {
                self.advance();
                ExprKind::Constant(Constant::Ellipsis)
            }
            Tok::Op("(") => {
                self.advance();
                return self.paren_rest(start);
            }
            Tok::Op("[") => {
                self.advance();
                return self.bracket_rest(start);
            }
            Tok::Op("{") => {
                self.advance();
                return self.brace_rest(start);
            }
            _ => return Err(Fail),
        };
        Ok(Expr {
            kind,
            span: self.span_from(start),
        })
    }

    fn paren_rest(&mut self, start: Pos) -> PResult<Expr> {
        if self.eat_op(")") {
            return Ok(Expr {
                kind: ExprKind::Tuple(Vec::new()),
                span: self.span_from(start),
            });
        }
        if self.is_kw("yield") {
            let mut inner = self.yield_expr()?;
            self.expect_op(")")?;
            inner.span = self.span_from(start);
            return Ok(inner);
        }
        let first = self.star_or_test()?;
        if self.is_kw("for") || self.is_kw("async") {
            let generators = self.comprehension_clauses()?;
            self.expect_op(")")?;
            return Ok(Expr {
                kind: ExprKind::Comp {
                    kind: CompKind::Generator,
                    element: Box::new(first),
                    value: None,
                    generators,
                },
                span: self.span_from(start),
            });
        }
        if self.eat_op(")") {
            let mut inner = first;
            inner.span = self.span_from(start);
            return Ok(inner);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op(")") {
                break;
            }
            items.push(self.star_or_test()?);
        }
        self.expect_op(")")?;
        Ok(Expr {
            kind: ExprKind::Tuple(items),
            span: self.span_from(start),
        })
    }

    fn bracket_rest(&mut self, start: Pos) -> PResult<Expr> {
        if self.eat_op("]") {
            return Ok(Expr {
                kind: ExprKind::List(Vec::new()),
                span: self.span_from(start),
            });
        }
        let first = self.star_or_test()?;
        if self.is_kw("for") || self.is_kw("async") {
            let generators = self.comprehension_clauses()?;
            self.expect_op("]")?;
            return Ok(Expr {
                kind: ExprKind::Comp {
                    kind: CompKind::List,
                    element: Box::new(first),
                    value: None,
                    generators,
                },
                span: self.span_from(start),
            });
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            items.push(self.star_or_test()?);
        }
        self.expect_op("]")?;
        Ok(Expr {
            kind: ExprKind::List(items),
            span: self.span_from(start),
        })
    }

    fn brace_rest(&mut self, start: Pos) -> PResult<Expr> {
        if self.eat_op("}") {
            return Ok(Expr {
                kind: ExprKind::Dict(Vec::new()),
                span: self.span_from(start),
            });
        }
        // Dict display or comprehension.
        let first_key = if self.eat_op("**") {
            None
        } else {
            Some(self.star_or_test()?)
        };
        if first_key.is_none() || self.is_op(":") {
            let first_value = if first_key.is_some() {
                self.expect_op(":")?;
                self.test()?
            } else {
                self.bitor()?
            };
            if let (Some(key), true) = (&first_key, self.is_kw("for") || self.is_kw("async")) {
                let generators = self.comprehension_clauses()?;
                self.expect_op("}")?;
                return Ok(Expr {
                    kind: ExprKind::Comp {
                        kind: CompKind::Dict,
                        element: Box::new(key.clone()),
                        value: Some(Box::new(first_value)),
                        generators,
                    },
                    span: self.span_from(start),
                });
            }
            let mut pairs = vec![(first_key, first_value)];
            while self.eat_op(",") {
                if self.is_op("}") {
                    break;
                }
                if self.eat_op("**") {
                    pairs.push((None, self.bitor()?));
                } else {
                    let key = self.test()?;
                    self.expect_op(":")?;
                    pairs.push((Some(key), self.test()?));
                }
            }
            self.expect_op("}")?;
            return Ok(Expr {
                kind: ExprKind::Dict(pairs),
                span: self.span_from(start),
            });
        }
        let first = first_key.expect("checked");
        if self.is_kw("for") || self.is_kw("async") {
            let generators = self.comprehension_clauses()?;
            self.expect_op("}")?;
            return Ok(Expr {
                kind: ExprKind::Comp {
                    kind: CompKind::Set,
                    element: Box::new(first),
                    value: None,
                    generators,
                },
                span: self.span_from(start),
            });
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("}") {
                break;
            }
            items.push(self.star_or_test()?);
        }
        self.expect_op("}")?;
        Ok(Expr {
            kind: ExprKind::Set(items),
            span: self.span_from(start),
        })
    }
}

/// Identifiers referenced inside f-string replacement fields. Conversion
/// flags, literal format-spec text and quoted strings are skipped.
fn fstring_names(body: &str) -> Vec<String> {
    let mut names = Vec::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    let mut depth = 0usize;
    let mut in_spec = false;
    while i < chars.len() {
        let c = chars[i];
        if depth == 0 {
            if c == '{' {
                if chars.get(i + 1) == Some(&'{') {
                    i += 2;
                    continue;
                }
                depth = 1;
            }
            i += 1;
            continue;
        }
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    in_spec = false;
                }
            }
            _ if in_spec && depth == 1 => {}
            '!' if chars.get(i + 1) != Some(&'=') => {
                // conversion flag such as !r
                i += 2;
                continue;
            }
            ':' if depth == 1 && chars.get(i + 1) != Some(&'=') => in_spec = true,
            '\'' | '"' => {
                let quote = c;
                i += 1;
                while i < chars.len() && chars[i] != quote {
                    i += 1;
                }
            }
            c if c == '_' || c.is_alphabetic() => {
                let begin = i;
                while i < chars.len() && (chars[i] == '_' || chars[i].is_alphanumeric()) {
                    i += 1;
                }
                let word: String = chars[begin..i].iter().collect();
                let after_dot = begin > 0 && chars[begin - 1] == '.';
                if !after_dot && !KEYWORDS.contains(&word.as_str()) {
                    names.push(word);
                }
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    names
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn body(src: &str) -> Vec<Stmt> {
        parse(src).unwrap().body
    }

    #[test]
    fn function_with_default() {
        let stmts = body("def f(x=[]):\n    return x");
        assert_eq!(stmts.len(), 1);
        let StmtKind::FunctionDef { name, params, body, .. } = &stmts[0].kind else {
            panic!("not a def: {:?}", stmts[0]);
        };
        assert_eq!(name, "f");
        assert_eq!(params.len(), 1);
        assert!(matches!(params[0].default.as_ref().unwrap().kind, ExprKind::List(_)));
        assert!(matches!(body[0].kind, StmtKind::Return(Some(_))));
    }

    #[test]
    fn full_signature_forms() {
        let stmts = body("async def f(a, b: int = 1, /, *args, c, d=2, **kw) -> None:\n    pass");
        let StmtKind::FunctionDef { params, returns, .. } = &stmts[0].kind else {
            panic!()
        };
        let names: Vec<_> = params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "args", "c", "d", "kw"]);
        assert!(returns.is_some());
        assert_eq!(params[2].kind, ParamKind::VarArgs);
        assert_eq!(params[5].kind, ParamKind::KwArgs);
    }

    #[test]
    fn try_except_else_finally() {
        let stmts = body(
            "try:\n    a()\nexcept (A, B) as e:\n    pass\nexcept:\n    raise\nelse:\n    b()\nfinally:\n    c()\n",
        );
        let StmtKind::Try {
            handlers,
            orelse,
            finalbody,
            ..
        } = &stmts[0].kind
        else {
            panic!()
        };
        assert_eq!(handlers.len(), 2);
        assert_eq!(handlers[0].name.as_deref(), Some("e"));
        assert!(handlers[1].exception.is_none());
        assert_eq!(orelse.len(), 1);
        assert_eq!(finalbody.len(), 1);
    }

    #[test]
    fn elif_chain_nests() {
        let stmts = body("if a:\n    x = 1\nelif b:\n    x = 2\nelse:\n    x = 3\n");
        let StmtKind::If { orelse, .. } = &stmts[0].kind else {
            panic!()
        };
        assert!(matches!(orelse[0].kind, StmtKind::If { .. }));
    }

    #[test]
    fn expressions_of_all_shapes() {
        let src = "v = [x * 2 for x in range(10) if x % 2 == 0]\n\
                   w = {k: v for k, v in d.items()}\n\
                   s = {1, 2, *rest}\n\
                   t = lambda a, b=1: a if b else -a\n\
                   u = obj.attr[1:2, ::3](*args, key=val, **kw)\n\
                   y = not a and b or c is not None and d not in e\n\
                   z = (yield)\n\
                   q = f\"{name!r:>10}\" 'tail'\n\
                   a, *b = c\n\
                   n: int = 5\n\
                   m += 1\n\
                   if (w := f()) > 0: pass\n\
                   print(sum(x for x in xs))\n\
                   r = await g() ** 2\n";
        let stmts = body(src);
        assert!(stmts.iter().all(|s| !s.is_opaque()), "{stmts:#?}");
        assert_eq!(stmts.len(), 14);
    }

    #[test]
    fn one_line_suites_and_semicolons() {
        let stmts = body("if x: a = 1; b = 2\nwhile y: break\n");
        let StmtKind::If { body, .. } = &stmts[0].kind else {
            panic!()
        };
        assert_eq!(body.len(), 2);
        assert!(matches!(stmts[1].kind, StmtKind::While { .. }));
    }

    #[test]
    fn parenthesized_with_items() {
        let stmts = body("with (open(a) as f, open(b) as g):\n    pass\nwith (yield x):\n    pass\n");
        let StmtKind::With { items, .. } = &stmts[0].kind else {
            panic!()
        };
        assert_eq!(items.len(), 2);
        assert!(!stmts[1].is_opaque());
    }

    #[test]
    fn bad_statement_becomes_opaque_and_parsing_resumes() {
        let stmts = body("def f():\n    print \"py2\"\n    return 1\nx = $\nclass C:\n    pass\n");
        let StmtKind::FunctionDef { body: fbody, .. } = &stmts[0].kind else {
            panic!()
        };
        assert!(fbody[0].is_opaque());
        assert!(matches!(fbody[1].kind, StmtKind::Return(_)));
        assert!(stmts[1].is_opaque());
        assert!(matches!(stmts[2].kind, StmtKind::ClassDef { .. }));
    }

    #[test]
    fn broken_compound_header_skips_its_block() {
        let stmts = body("match cmd:\n    case 1:\n        pass\ny = 2\n");
        assert_eq!(stmts.len(), 2);
        assert!(stmts[0].is_opaque());
        assert_eq!(stmts[0].span.end.line, 3);
        assert!(matches!(stmts[1].kind, StmtKind::Assign { .. }));
    }

    #[test]
    fn truncated_snippets_are_tolerated() {
        let stmts = body("def f(a):\n    total = compute(a,\n");
        let StmtKind::FunctionDef { body: fbody, .. } = &stmts[0].kind else {
            panic!()
        };
        assert!(fbody[0].is_opaque());
        assert!(body("def f():").iter().all(Stmt::is_opaque));
    }

    #[test]
    fn indented_first_line() {
        let stmts = body("    x = 1\n    y = 2\n");
        assert_eq!(stmts.len(), 2);
    }

    #[test]
    fn fstring_name_extraction() {
        assert_eq!(fstring_names("{a} {{b}} {c.d + e!r:{width}}"), ["a", "c", "e", "width"]);
        assert_eq!(fstring_names("{when:%Y-%m} {d['key']}"), ["when", "d"]);
    }
}
