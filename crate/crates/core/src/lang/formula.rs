use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::Tok;
use super::{NameUse, ParseError, Parser};
use crate::model::{Expr, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    /// Tolerance for `=`; on integer-valued states this is exact comparison.
    pub const EQ_TOL: f64 = 1e-9;

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => (lhs - rhs).abs() <= Self::EQ_TOL,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
        }
    }
}

/// Closed time window `[lower, upper]` of a temporal operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBound {
    pub lower: f64,
    pub upper: f64,
}

impl TimeBound {
    pub fn new(lower: f64, upper: f64) -> Option<Self> {
        (lower >= 0.0 && lower < upper && upper.is_finite()).then_some(TimeBound { lower, upper })
    }
}

/// MiTL syntax tree. `Eventually` and `Always` are kept as written;
/// [`Formula::desugar`] rewrites them into until and negation.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Atom { lhs: Expr, op: CmpOp, rhs: Expr },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until { bound: TimeBound, left: Box<Formula>, right: Box<Formula> },
    Eventually { bound: TimeBound, sub: Box<Formula> },
    Always { bound: TimeBound, sub: Box<Formula> },
}

impl Formula {
    pub fn atom(lhs: Expr, op: CmpOp, rhs: Expr) -> Self {
        Formula::Atom { lhs, op, rhs }
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(bound: TimeBound, a: Formula, b: Formula) -> Self {
        Formula::Until { bound, left: Box::new(a), right: Box::new(b) }
    }

    pub fn eventually(bound: TimeBound, f: Formula) -> Self {
        Formula::Eventually { bound, sub: Box::new(f) }
    }

    pub fn always(bound: TimeBound, f: Formula) -> Self {
        Formula::Always { bound, sub: Box::new(f) }
    }

    /// Rewrites `F[a,b] φ` as `tt U[a,b] φ` and `G[a,b] φ` as `!F[a,b] !φ`.
    pub fn desugar(&self) -> Formula {
        match self {
            Formula::True | Formula::Atom { .. } => self.clone(),
            Formula::Not(f) => Formula::not(f.desugar()),
            Formula::And(a, b) => Formula::and(a.desugar(), b.desugar()),
            Formula::Or(a, b) => Formula::or(a.desugar(), b.desugar()),
            Formula::Until { bound, left, right } => Formula::until(*bound, left.desugar(), right.desugar()),
            Formula::Eventually { bound, sub } => Formula::until(*bound, Formula::True, sub.desugar()),
            Formula::Always { bound, sub } => {
                Formula::not(Formula::until(*bound, Formula::True, Formula::not(sub.desugar())))
            }
        }
    }

    /// Horizon needed to decide the formula at time 0: the largest sum of
    /// nested upper bounds.
    pub fn depth(&self) -> f64 {
        match self {
            Formula::True | Formula::Atom { .. } => 0.0,
            Formula::Not(f) => f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) => a.depth().max(b.depth()),
            Formula::Until { bound, left, right } => bound.upper + left.depth().max(right.depth()),
            Formula::Eventually { bound, sub } | Formula::Always { bound, sub } => bound.upper + sub.depth(),
        }
    }

    fn level(&self) -> u8 {
        match self {
            Formula::Until { .. } => 0,
            Formula::Or(..) => 1,
            Formula::And(..) => 2,
            _ => 3,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.level() < min {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Formula::True => write!(f, "tt"),
            Formula::Atom { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Formula::Not(g) => {
                write!(f, "!")?;
                g.write_operand(f)
            }
            Formula::And(a, b) => {
                a.write_at(f, 2)?;
                write!(f, " & ")?;
                b.write_at(f, 3)
            }
            Formula::Or(a, b) => {
                a.write_at(f, 1)?;
                write!(f, " | ")?;
                b.write_at(f, 2)
            }
            Formula::Until { bound, left, right } => {
                left.write_at(f, 1)?;
                write!(f, " U[{}, {}] ", bound.lower, bound.upper)?;
                right.write_at(f, 0)
            }
            Formula::Eventually { bound, sub } => {
                write!(f, "F[{}, {}] ", bound.lower, bound.upper)?;
                sub.write_operand(f)
            }
            Formula::Always { bound, sub } => {
                write!(f, "G[{}, {}] ", bound.lower, bound.upper)?;
                sub.write_operand(f)
            }
        }
    }

    /// Operand of a prefix operator; atoms are parenthesized for readability.
    fn write_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if matches!(self, Formula::Atom { .. }) {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            write!(f, ")")
        } else {
            self.write_at(f, 3)
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

/// Names an atomic predicate may mention. Constants are substituted by value.
#[derive(Debug, Clone, Default)]
pub struct Symbols {
    pub states: Vec<String>,
    pub constants: Vec<(String, f64)>,
}

impl Symbols {
    pub fn states<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Symbols { states: names.into_iter().map(Into::into).collect(), constants: Vec::new() }
    }

    pub fn of(model: &Model) -> Self {
        Symbols { states: model.state_names(), constants: model.constants().to_vec() }
    }
}

pub fn parse_formula(src: &str, symbols: &Symbols) -> Result<Formula, ParseError> {
    let mut p = Parser::new(src)?;
    let f = formula(&mut p, symbols)?;
    if !p.at_eof() {
        return Err(p.error("an operator or end of formula"));
    }
    Ok(f)
}

/// Parses one formula and stops at the first token that cannot continue it.
pub(crate) fn formula(p: &mut Parser, symbols: &Symbols) -> Result<Formula, ParseError> {
    until(p, symbols)
}

fn is_temporal(p: &Parser, name: &str) -> bool {
    p.is_keyword(name) && p.peek_at(1) == &Tok::LBracket
}

fn until(p: &mut Parser, s: &Symbols) -> Result<Formula, ParseError> {
    let lhs = or(p, s)?;
    if is_temporal(p, "U") {
        p.advance();
        let b = bound(p)?;
        let rhs = until(p, s)?;
        return Ok(Formula::until(b, lhs, rhs));
    }
    Ok(lhs)
}

fn or(p: &mut Parser, s: &Symbols) -> Result<Formula, ParseError> {
    let mut lhs = and(p, s)?;
    while p.eat(&Tok::Pipe) {
        lhs = Formula::or(lhs, and(p, s)?);
    }
    Ok(lhs)
}

fn and(p: &mut Parser, s: &Symbols) -> Result<Formula, ParseError> {
    let mut lhs = unary(p, s)?;
    while p.eat(&Tok::Amp) {
        lhs = Formula::and(lhs, unary(p, s)?);
    }
    Ok(lhs)
}

fn unary(p: &mut Parser, s: &Symbols) -> Result<Formula, ParseError> {
    if p.eat(&Tok::Bang) {
        return Ok(Formula::not(unary(p, s)?));
    }
    if is_temporal(p, "F") || is_temporal(p, "G") {
        let always = p.is_keyword("G");
        p.advance();
        let b = bound(p)?;
        let sub = unary(p, s)?;
        return Ok(if always { Formula::always(b, sub) } else { Formula::eventually(b, sub) });
    }
    primary(p, s)
}

fn primary(p: &mut Parser, s: &Symbols) -> Result<Formula, ParseError> {
    if p.is_keyword("tt") {
        p.advance();
        return Ok(Formula::True);
    }
    if p.is_keyword("ff") {
        p.advance();
        return Ok(Formula::not(Formula::True));
    }
    if p.peek() == &Tok::LParen {
        // `(` opens either a parenthesized formula or an arithmetic
        // expression starting a comparison; try the comparison first.
        let start = p.save();
        let cmp_err = match comparison(p, s) {
            Ok(f) => return Ok(f),
            Err(e) => e,
        };
        p.restore(start);
        p.advance();
        let inner = match formula(p, s).and_then(|f| p.expect(&Tok::RParen).map(|_| f)) {
            Ok(f) => f,
            Err(e) => return Err(furthest(cmp_err, e)),
        };
        return Ok(inner);
    }
    comparison(p, s)
}

/// Picks the more informative of two failed alternatives: an unknown name
/// beats a syntax error, otherwise the one that got further wins.
fn furthest(a: ParseError, b: ParseError) -> ParseError {
    let semantic = |e: &ParseError| e.found.starts_with("unknown `");
    if semantic(&a) != semantic(&b) {
        return if semantic(&a) { a } else { b };
    }
    if (b.line, b.col) > (a.line, a.col) {
        b
    } else {
        a
    }
}

fn cmp_op(p: &mut Parser) -> Option<CmpOp> {
    let op = match p.peek() {
        Tok::Lt => CmpOp::Lt,
        Tok::Le => CmpOp::Le,
        Tok::Gt => CmpOp::Gt,
        Tok::Ge => CmpOp::Ge,
        Tok::Assign => CmpOp::Eq,
        _ => return None,
    };
    p.advance();
    Some(op)
}

/// `expr op expr (op expr)?`; a chain `a < x < b` is the conjunction of both links.
fn comparison(p: &mut Parser, s: &Symbols) -> Result<Formula, ParseError> {
    let first = atom_expr(p, s)?;
    let op = cmp_op(p).ok_or_else(|| p.error("a comparison operator"))?;
    let second = atom_expr(p, s)?;
    let link = Formula::atom(first, op, second.clone());
    match cmp_op(p) {
        Some(op2) => {
            let third = atom_expr(p, s)?;
            Ok(Formula::and(link, Formula::atom(second, op2, third)))
        }
        None => Ok(link),
    }
}

fn atom_expr(p: &mut Parser, s: &Symbols) -> Result<Expr, ParseError> {
    let mut uses: Vec<NameUse> = Vec::new();
    let e = p.expr(&mut uses)?;
    for u in &uses {
        let known = s.states.contains(&u.name) || s.constants.iter().any(|(c, _)| *c == u.name);
        if !known {
            return Err(ParseError {
                line: u.line,
                col: u.col,
                expected: format!("a state variable (one of {})", super::quote_list(&s.states)),
                found: format!("unknown `{}`", u.name),
            });
        }
    }
    Ok(substitute(e, &s.constants))
}

fn substitute(e: Expr, constants: &[(String, f64)]) -> Expr {
    match e {
        Expr::Var(name) => match constants.iter().find(|(c, _)| *c == name) {
            Some(&(_, v)) => Expr::Const(v),
            None => Expr::Var(name),
        },
        Expr::Const(_) => e,
        Expr::Unary(op, a) => Expr::unary(op, substitute(*a, constants)),
        Expr::Binary(op, a, b) => Expr::binary(op, substitute(*a, constants), substitute(*b, constants)),
    }
}

fn bound(p: &mut Parser) -> Result<TimeBound, ParseError> {
    p.expect(&Tok::LBracket)?;
    let tok = p.token().clone();
    let lower = p.number()?;
    p.expect(&Tok::Comma)?;
    let upper = p.number()?;
    p.expect(&Tok::RBracket)?;
    TimeBound::new(lower, upper).ok_or_else(|| {
        p.error_at(&tok, "a time window with 0 <= T1 < T2", format!("[{lower}, {upper}]"))
    })
}
