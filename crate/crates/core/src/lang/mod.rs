//! Text formats: the model DSL, MiTL formulae and property files, search
//! spaces and prior specifications.
//!
//! All parsers are hand-written recursive descent over a shared token stream
//! and report 1-based line/column positions.

mod config;
mod formula;
mod lexer;
mod model_parser;

use std::fmt;

use thiserror::Error;

use crate::model::{BinaryOp, Expr, UnaryOp};
use lexer::{Tok, Token};

pub use config::{parse_priors, parse_props, parse_space, Property};
pub use formula::{parse_formula, CmpOp, Formula, Symbols, TimeBound};
pub use model_parser::parse_model;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
    pub found: String,
}

/// A name used inside an expression, with the position of its first use.
#[derive(Debug, Clone)]
pub(crate) struct NameUse {
    pub name: String,
    pub line: usize,
    pub col: usize,
}

pub(crate) struct Parser<'s> {
    src: &'s str,
    toks: Vec<Token>,
    pos: usize,
}

impl<'s> Parser<'s> {
    pub fn new(src: &'s str) -> Result<Self, ParseError> {
        Ok(Parser { src, toks: lexer::tokenize(src)?, pos: 0 })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub fn token(&self) -> &Token {
        &self.toks[self.pos]
    }

    pub fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn error(&self, expected: impl Into<String>) -> ParseError {
        let t = self.token();
        ParseError { line: t.line, col: t.col, expected: expected.into(), found: t.tok.to_string() }
    }

    /// Error anchored at an earlier token.
    pub fn error_at(&self, tok: &Token, expected: impl Into<String>, found: impl Into<String>) -> ParseError {
        ParseError { line: tok.line, col: tok.col, expected: expected.into(), found: found.into() }
    }

    pub fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, t: &Tok) -> Result<(), ParseError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(t.to_string()))
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.advance();
            Ok(())
        } else {
            Err(self.error(format!("`{kw}`")))
        }
    }

    pub fn ident(&mut self) -> Result<(String, Token), ParseError> {
        let tok = self.token().clone();
        match &tok.tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.advance();
                Ok((s, tok))
            }
            _ => Err(self.error("an identifier")),
        }
    }

    pub fn number(&mut self) -> Result<f64, ParseError> {
        let neg = self.eat(&Tok::Minus);
        match *self.peek() {
            Tok::Number(v) => {
                self.advance();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.error("a number")),
        }
    }

    pub fn source_between(&self, from: usize, to: usize) -> &'s str {
        let a = self.toks[from].offset;
        let b = self.toks[to].offset;
        self.src[a..b].trim()
    }

    pub fn save(&self) -> usize {
        self.pos
    }

    pub fn restore(&mut self, pos: usize) {
        self.pos = pos;
    }

    /// `expr := term (("+"|"-") term)*`
    pub fn expr(&mut self, uses: &mut Vec<NameUse>) -> Result<Expr, ParseError> {
        let mut lhs = self.term(uses)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term(uses)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self, uses: &mut Vec<NameUse>) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(uses)?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary(uses)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self, uses: &mut Vec<NameUse>) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary(uses)? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::unary(UnaryOp::Neg, e),
            });
        }
        self.power(uses)
    }

    fn power(&mut self, uses: &mut Vec<NameUse>) -> Result<Expr, ParseError> {
        let base = self.primary(uses)?;
        if self.eat(&Tok::Caret) {
            let exponent = self.unary(uses)?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self, uses: &mut Vec<NameUse>) -> Result<Expr, ParseError> {
        let tok = self.token().clone();
        match &tok.tok {
            Tok::Number(v) => {
                self.advance();
                Ok(Expr::Const(*v))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr(uses)?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) if (name == "exp" || name == "log") && self.peek_at(1) == &Tok::LParen => {
                let op = if name == "exp" { UnaryOp::Exp } else { UnaryOp::Log };
                self.advance();
                self.advance();
                let e = self.expr(uses)?;
                self.expect(&Tok::RParen)?;
                Ok(Expr::unary(op, e))
            }
            Tok::Ident(name) => {
                self.advance();
                uses.push(NameUse { name: name.clone(), line: tok.line, col: tok.col });
                Ok(Expr::Var(name.clone()))
            }
            _ => Err(self.error("an expression")),
        }
    }
}

/// Names that cannot be declared as symbols.
pub(crate) const RESERVED: &[&str] = &["exp", "log", "tt", "ff"];

pub(crate) fn quote_list(items: &[impl fmt::Display]) -> String {
    items.iter().map(|s| format!("`{s}`")).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_expr(src: &str) -> Expr {
        let mut p = Parser::new(src).unwrap();
        let e = p.expr(&mut Vec::new()).unwrap();
        assert!(p.at_eof(), "trailing input in {src}");
        e
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse_expr("1 - 2 - 3").eval(&|_: &str| None).unwrap(), -4.0);
        assert_eq!(parse_expr("2 ^ 3 ^ 2").eval(&|_: &str| None).unwrap(), 512.0);
        assert_eq!(parse_expr("-2 ^ 2").eval(&|_: &str| None).unwrap(), -4.0);
        assert_eq!(parse_expr("8 / 4 / 2").eval(&|_: &str| None).unwrap(), 1.0);
        assert_eq!(parse_expr("1 + 2 * 3").eval(&|_: &str| None).unwrap(), 7.0);
        assert_eq!(parse_expr("exp(0) + log(1)").eval(&|_: &str| None).unwrap(), 1.0);
    }

    #[test]
    fn display_round_trips() {
        for src in ["ks * kavg / N * S * I", "-(a + b) * c", "x ^ (-y)", "(-3) * x", "a - -b", "k * exp(alpha * X2)"] {
            let e = parse_expr(src);
            assert_eq!(parse_expr(&e.to_string()), e, "{src} -> {e}");
        }
    }
}
