//! Indentation-aware tokenizer for the Python subset the parser understands.

use super::ast::{Pos, Span};
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Number,
    /// A string literal with its prefix letters (lowercased) and raw body text.
    Str {
        prefix: String,
        body: String,
    },
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    /// A character that cannot start any token.
    Error(char),
    End,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "(", ")", "[", "]",
    "{", "}", ",", ":", ".", ";", "=",
];

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    offset: usize,
    line: usize,
    line_start: usize,
    depth: usize,
    indents: Vec<usize>,
    tokens: Vec<Token>,
    at_line_start: bool,
}

/// Tokenizes `src`. Only characters that mark binary input (NUL and other
/// control characters, or the UTF-8 replacement character) are fatal; any
/// other unknown character becomes a [`Tok::Error`] token for the parser to
/// quarantine.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lexer = Lexer {
        src,
        bytes: src.as_bytes(),
        offset: 0,
        line: 1,
        line_start: 0,
        depth: 0,
        indents: vec![0],
        tokens: Vec::new(),
        at_line_start: true,
    };
    lexer.run()?;
    Ok(lexer.tokens)
}

impl<'a> Lexer<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.src[self.line_start..self.offset].chars().count() + 1,
            offset: self.offset,
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.offset..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.offset..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.line_start = self.offset;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, start: Pos) {
        let end = self.pos();
        self.tokens.push(Token {
            tok,
            span: Span { start, end },
        });
    }

    fn fatal(&self, c: char) -> ParseError {
        ParseError::Tokenize {
            line: self.line,
            message: format!("binary or control character U+{:04X}", c as u32),
        }
    }

    fn run(&mut self) -> Result<(), ParseError> {
        loop {
            if self.at_line_start && self.depth == 0 && !self.indentation()? {
                break;
            }
            let Some(c) = self.peek() else { break };
            let start = self.pos();
            match c {
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(Tok::Newline, start);
                        self.at_line_start = true;
                    }
                }
                ' ' | '\t' | '\x0c' | '\r' => {
                    self.bump();
                }
                '#' => self.skip_comment(),
                '\\' if matches!(self.peek_at(1), Some('\n'))
                    || (self.peek_at(1) == Some('\r') && self.peek_at(2) == Some('\n')) =>
                {
                    self.bump();
                    if self.peek() == Some('\r') {
                        self.bump();
                    }
                    self.bump();
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                    self.number();
                    self.push(Tok::Number, start);
                }
                c if is_ident_start(c) => {
                    if let Some(prefix_len) = self.string_prefix_len() {
                        self.string(prefix_len, start)?;
                    } else {
                        let name = self.ident();
                        self.push(Tok::Name(name), start);
                    }
                }
                '"' | '\'' => self.string(0, start)?,
                c if is_fatal(c) => return Err(self.fatal(c)),
                _ => {
                    if let Some(op) = OPERATORS.iter().find(|op| self.src[self.offset..].starts_with(**op)) {
                        self.offset += op.len();
                        match *op {
                            "(" | "[" | "{" => self.depth += 1,
                            ")" | "]" | "}" => self.depth = self.depth.saturating_sub(1),
                            _ => {}
                        }
                        self.push(Tok::Op(op), start);
                    } else {
                        self.bump();
                        self.push(Tok::Error(c), start);
                    }
                }
            }
        }

        let end = self.pos();
        if !matches!(
            self.tokens.last().map(|t| &t.tok),
            None | Some(Tok::Newline) | Some(Tok::Dedent)
        ) {
            self.push(Tok::Newline, end);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, end);
        }
        self.push(Tok::End, end);
        Ok(())
    }

    /// Measures leading whitespace of a logical line and emits INDENT/DEDENT.
    /// Blank and comment-only lines are consumed whole. Returns false at EOF.
    fn indentation(&mut self) -> Result<bool, ParseError> {
        loop {
            let mut width = 0usize;
            while let Some(c) = self.peek() {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' | '\r' => {}
                    _ => break,
                }
                self.bump();
            }
            match self.peek() {
                None => return Ok(false),
                Some('\n') => {
                    self.bump();
                    continue;
                }
                Some('#') => {
                    self.skip_comment();
                    continue;
                }
                Some(c) if is_fatal(c) => return Err(self.fatal(c)),
                Some(_) => {}
            }
            self.at_line_start = false;
            let start = self.pos();
            let current = *self.indents.last().expect("indent stack never empty");
            if width > current {
                self.indents.push(width);
                self.push(Tok::Indent, start);
            } else if width < current {
                while self.indents.last().is_some_and(|&top| top > width) {
                    self.indents.pop();
                    self.push(Tok::Dedent, start);
                }
                // Inconsistent dedent: adopt the new level rather than failing.
                if *self.indents.last().expect("indent stack never empty") < width {
                    self.indents.push(width);
                    self.push(Tok::Indent, start);
                }
            }
            return Ok(true);
        }
    }

    fn skip_comment(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    fn ident(&mut self) -> String {
        let start = self.offset;
        while self.peek().is_some_and(is_ident_continue) {
            self.bump();
        }
        self.src[start..self.offset].to_string()
    }

    fn number(&mut self) {
        let start = self.offset;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                let exponent = matches!(c, 'e' | 'E')
                    && !self.src[start..].starts_with("0x")
                    && !self.src[start..].starts_with("0X")
                    && matches!(self.peek_at(1), Some('+') | Some('-'));
                self.bump();
                if exponent {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    /// Length of a string prefix (`r`, `b`, `f`, `u`, `rb`, ...) directly
    /// followed by a quote at the current position.
    fn string_prefix_len(&self) -> Option<usize> {
        let rest = &self.bytes[self.offset..];
        let letters = rest.iter().take_while(|b| b.is_ascii_alphabetic()).count();
        if letters == 0 || letters > 2 || !matches!(rest.get(letters), Some(b'"') | Some(b'\'')) {
            return None;
        }
        let prefix = self.src[self.offset..self.offset + letters].to_ascii_lowercase();
        matches!(prefix.as_str(), "r" | "u" | "b" | "f" | "br" | "rb" | "fr" | "rf").then_some(letters)
    }

    fn string(&mut self, prefix_len: usize, start: Pos) -> Result<(), ParseError> {
        let prefix = self.src[self.offset..self.offset + prefix_len].to_ascii_lowercase();
        self.offset += prefix_len;
        let quote = self.bump().expect("caller checked quote");
        let triple = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if triple {
            self.bump();
            self.bump();
        }
        let body_start = self.offset;
        let mut terminated = false;
        let mut body_end = self.offset;
        while let Some(c) = self.peek() {
            if c == '\\' {
                self.bump();
                self.bump();
                continue;
            }
            if c == '\n' && !triple {
                break;
            }
            if c == quote {
                if !triple {
                    body_end = self.offset;
                    self.bump();
                    terminated = true;
                    break;
                }
                if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                    body_end = self.offset;
                    self.bump();
                    self.bump();
                    self.bump();
                    terminated = true;
                    break;
                }
            }
            if c == '\0' {
                return Err(self.fatal(c));
            }
            self.bump();
        }
        if !terminated {
            body_end = self.offset;
        }
        let body = self.src[body_start..body_end].to_string();
        if terminated || triple {
            // An unterminated triple-quoted string at EOF is a truncated
            // snippet; keep it as a literal.
            self.push(Tok::Str { prefix, body }, start);
        } else {
            self.push(Tok::Error(quote), start);
        }
        Ok(())
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

fn is_fatal(c: char) -> bool {
    c == '\u{FFFD}' || (c.is_control() && !matches!(c, '\t' | '\n' | '\r' | '\x0c'))
}
