//! Tokenizer and recursive-descent parser.
//!
//! Precedence, loosest first: `+ -`, `* /`, unary `-`, `^`. Exponents are
//! integer literals and do not chain.

use std::f64::consts::{E, PI};

use thiserror::Error;

use super::{Func, Node};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("variable index out of range: x{index} at offset {offset} (dimension {dimension})")]
    VariableOutOfRange {
        offset: usize,
        index: usize,
        dimension: usize,
    },
}

impl ParseError {
    /// Byte offset of the offending token, when there is one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::VariableOutOfRange { offset, .. } => Some(*offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        offset,
        message: message.into(),
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()))
        {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text
                .parse()
                .map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
            if !value.is_finite() {
                return Err(syntax(start, format!("number `{text}` is not finite")));
            }
            out.push(Token {
                tok: Tok::Num(value),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                offset: start,
            });
        } else if b"+-*/^(),".contains(&c) {
            out.push(Token {
                tok: Tok::Sym(c as char),
                offset: start,
            });
            i += 1;
        } else {
            let ch = src[start..].chars().next().unwrap_or('?');
            return Err(syntax(start, format!("unexpected character `{ch}`")));
        }
    }
    out.push(Token {
        tok: Tok::End,
        offset: src.len(),
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dimension: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        let t = self.next();
        if t.tok == Tok::Sym(c) {
            Ok(())
        } else {
            Err(unexpected(&t, &format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.is_sym('+') {
                self.next();
                let rhs = self.term()?;
                lhs = Node::Add(Arc::new(lhs), Arc::new(rhs));
            } else if self.is_sym('-') {
                self.next();
                let rhs = self.term()?;
                lhs = Node::Sub(Arc::new(lhs), Arc::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.is_sym('*') {
                self.next();
                let rhs = self.unary()?;
                lhs = Node::Mul(Arc::new(lhs), Arc::new(rhs));
            } else if self.is_sym('/') {
                self.next();
                let rhs = self.unary()?;
                lhs = Node::Div(Arc::new(lhs), Arc::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.is_sym('-') {
            self.next();
            return Ok(Node::Neg(Arc::new(self.unary()?)));
        }
        if self.is_sym('+') {
            self.next();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if !self.is_sym('^') {
            return Ok(base);
        }
        self.next();
        let mut sign = 1i64;
        if self.is_sym('-') {
            self.next();
            sign = -1;
        } else if self.is_sym('+') {
            self.next();
        }
        let t = self.next();
        let exponent = match t.tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                (sign * v as i64) as i32
            }
            _ => return Err(unexpected(&t, "exponent must be an integer literal")),
        };
        if self.is_sym('^') {
            return Err(syntax(
                self.peek().offset,
                "chained exponent; use parentheses",
            ));
        }
        Ok(Node::Pow(Arc::new(base), exponent))
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::Sym('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Ident(ref name) => self.identifier(name, t.offset),
            _ => Err(unexpected(
                &t,
                "expected a number, variable, function or `(`",
            )),
        }
    }

    fn identifier(&mut self, name: &str, offset: usize) -> Result<Node, ParseError> {
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| ParseError::VariableOutOfRange {
                    offset,
                    index: usize::MAX,
                    dimension: self.dimension,
                })?;
                if index >= self.dimension {
                    return Err(ParseError::VariableOutOfRange {
                        offset,
                        index,
                        dimension: self.dimension,
                    });
                }
                return Ok(Node::Var(index));
            }
        }
        match name {
            "pi" => return Ok(Node::Const(PI)),
            "e" => return Ok(Node::Const(E)),
            _ => {}
        }
        if name == "atan2" {
            self.expect('(')?;
            let y = self.expr()?;
            self.expect(',')?;
            let x = self.expr()?;
            self.expect(')')?;
            return Ok(Node::Atan2(Arc::new(y), Arc::new(x)));
        }
        if let Some(func) = Func::from_name(name) {
            self.expect('(')?;
            let arg = self.expr()?;
            self.expect(')')?;
            return Ok(Node::Call(func, Arc::new(arg)));
        }
        Err(ParseError::UnknownIdentifier {
            offset,
            name: name.to_string(),
        })
    }
}

fn unexpected(t: &Token, what: &str) -> ParseError {
    let found = match &t.tok {
        Tok::End => "end of input".to_string(),
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Sym(c) => format!("`{c}`"),
    };
    syntax(t.offset, format!("{what}, found {found}"))
}

pub(super) fn parse(src: &str, dimension: usize) -> Result<Node, ParseError> {
    if src.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        dimension,
    };
    let node = p.expr()?;
    let t = p.next();
    if t.tok != Tok::End {
        return Err(unexpected(&t, "expected an operator or end of input"));
    }
    Ok(node)
}
