//! Arithmetic expressions used for reaction rates, drifts, diffusion entries,
//! mode-switching rates and atomic predicates.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }
}

/// Expression tree over real constants and named symbols.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("log of non-positive value {value} in `{node}`")]
    LogDomain { node: String, value: f64 },
}

/// Name lookup used by [`Expr::eval`].
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for BTreeMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<F: Fn(&str) -> Option<f64>> Env for F {
    fn lookup(&self, name: &str) -> Option<f64> {
        self(name)
    }
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Self {
        Expr::Unary(op, Box::new(arg))
    }

    /// Evaluates the tree against `env`.
    pub fn eval(&self, env: &impl Env) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => env.lookup(name).ok_or_else(|| ExprError::Unbound(name.clone())),
            Expr::Unary(op, arg) => {
                let v = arg.eval(env)?;
                apply_unary(*op, v, || self.to_string())
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                apply_binary(*op, x, y, || self.to_string())
            }
        }
    }

    /// Every symbol referenced by the tree, in first-occurrence order.
    pub fn symbols(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(n) => {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
            Expr::Unary(_, a) => a.collect_symbols(out),
            Expr::Binary(_, a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
        }
    }

    /// Resolves names to state slots or fixed values and folds constant subtrees.
    pub fn compile(&self, resolve: &impl Fn(&str) -> Option<Binding>) -> Result<CompiledExpr, ExprError> {
        let root = self.lower(resolve)?;
        Ok(CompiledExpr { root })
    }

    fn lower(&self, resolve: &impl Fn(&str) -> Option<Binding>) -> Result<Node, ExprError> {
        Ok(match self {
            Expr::Const(c) => Node::Const(*c),
            Expr::Var(name) => match resolve(name) {
                Some(Binding::Slot(i)) => Node::Slot(i),
                Some(Binding::Value(v)) => Node::Const(v),
                None => return Err(ExprError::Unbound(name.clone())),
            },
            Expr::Unary(op, arg) => {
                let inner = arg.lower(resolve)?;
                let text: Arc<str> = self.to_string().into();
                if let Node::Const(v) = inner {
                    Node::Const(apply_unary(*op, v, || text.to_string())?)
                } else {
                    Node::Unary(*op, Box::new(inner), text)
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.lower(resolve)?;
                let y = b.lower(resolve)?;
                let text: Arc<str> = self.to_string().into();
                match (&x, &y) {
                    (Node::Const(u), Node::Const(v)) => Node::Const(apply_binary(*op, *u, *v, || text.to_string())?),
                    _ => Node::Binary(*op, Box::new(x), Box::new(y), text),
                }
            }
        })
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Unary(UnaryOp::Neg, a) => {
                let wrap = parent > 3;
                if wrap {
                    write!(f, "(")?;
                }
                write!(f, "-")?;
                a.fmt_prec(f, 3)?;
                if wrap {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Expr::Unary(op, a) => {
                let name = if *op == UnaryOp::Exp { "exp" } else { "log" };
                write!(f, "{name}(")?;
                a.fmt_prec(f, 0)?;
                write!(f, ")")
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let wrap = p < parent;
                if wrap {
                    write!(f, "(")?;
                }
                // Left-associative except `^`, which binds right.
                let (lp, rp) = if *op == BinaryOp::Pow { (p + 1, p) } else { (p, p + 1) };
                a.fmt_prec(f, lp)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_prec(f, rp)?;
                if wrap {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

fn apply_unary(op: UnaryOp, v: f64, node: impl Fn() -> String) -> Result<f64, ExprError> {
    match op {
        UnaryOp::Neg => Ok(-v),
        UnaryOp::Exp => Ok(v.exp()),
        UnaryOp::Log => {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(ExprError::LogDomain { node: node(), value: v })
            }
        }
    }
}

fn apply_binary(op: BinaryOp, x: f64, y: f64, node: impl Fn() -> String) -> Result<f64, ExprError> {
    match op {
        BinaryOp::Add => Ok(x + y),
        BinaryOp::Sub => Ok(x - y),
        BinaryOp::Mul => Ok(x * y),
        BinaryOp::Div => {
            if y == 0.0 {
                Err(ExprError::DivisionByZero(node()))
            } else {
                Ok(x / y)
            }
        }
        BinaryOp::Pow => Ok(x.powf(y)),
    }
}

/// How a symbol is bound when compiling an expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binding {
    /// Read from the state vector at this index.
    Slot(usize),
    /// Fixed for the lifetime of the compiled expression (constants, parameters).
    Value(f64),
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(usize),
    Unary(UnaryOp, Box<Node>, Arc<str>),
    Binary(BinaryOp, Box<Node>, Box<Node>, Arc<str>),
}

impl Node {
    #[inline]
    fn eval(&self, state: &[f64]) -> Result<f64, ExprError> {
        match self {
            Node::Const(c) => Ok(*c),
            Node::Slot(i) => Ok(state[*i]),
            Node::Unary(op, a, text) => {
                let v = a.eval(state)?;
                apply_unary(*op, v, || text.to_string())
            }
            Node::Binary(op, a, b, text) => {
                let x = a.eval(state)?;
                let y = b.eval(state)?;
                apply_binary(*op, x, y, || text.to_string())
            }
        }
    }
}

/// An expression with all names resolved, evaluated against a flat state slice.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
}

impl CompiledExpr {
    #[inline]
    pub fn eval(&self, state: &[f64]) -> Result<f64, ExprError> {
        self.root.eval(state)
    }

    /// The folded value when the expression does not depend on the state.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn product_of_const_and_var() {
        let e = Expr::binary(BinaryOp::Mul, Expr::Const(3.0), Expr::var("x"));
        assert_eq!(e.eval(&env(&[("x", 2.0)])).unwrap(), 6.0);
    }

    #[test]
    fn rumour_spreading_rate() {
        // ks * kavg / N * S * I
        let e = [Expr::var("kavg"), Expr::var("N"), Expr::var("S"), Expr::var("I")]
            .into_iter()
            .zip([BinaryOp::Mul, BinaryOp::Div, BinaryOp::Mul, BinaryOp::Mul])
            .fold(Expr::var("ks"), |acc, (rhs, op)| Expr::binary(op, acc, rhs));
        let v = e
            .eval(&env(&[("ks", 1.0), ("kavg", 20.0), ("N", 100.0), ("S", 10.0), ("I", 90.0)]))
            .unwrap();
        assert!((v - 180.0).abs() < 1e-12);
    }

    #[test]
    fn exp_of_zero() {
        let e = Expr::unary(UnaryOp::Exp, Expr::binary(BinaryOp::Mul, Expr::var("alpha"), Expr::var("X")));
        assert_eq!(e.eval(&env(&[("alpha", 0.1), ("X", 0.0)])).unwrap(), 1.0);
    }

    #[test]
    fn errors_name_the_node() {
        let e = Expr::binary(BinaryOp::Div, Expr::var("a"), Expr::var("b"));
        assert_eq!(
            e.eval(&env(&[("a", 1.0), ("b", 0.0)])),
            Err(ExprError::DivisionByZero("a / b".into()))
        );
        assert_eq!(e.eval(&env(&[("a", 1.0)])), Err(ExprError::Unbound("b".into())));
        let l = Expr::unary(UnaryOp::Log, Expr::var("a"));
        assert!(matches!(l.eval(&env(&[("a", -1.0)])), Err(ExprError::LogDomain { value, .. }) if value == -1.0));
    }

    #[test]
    fn compile_folds_parameters() {
        let e = Expr::binary(
            BinaryOp::Mul,
            Expr::binary(BinaryOp::Mul, Expr::var("k"), Expr::var("c")),
            Expr::var("X"),
        );
        let c = e
            .compile(&|n: &str| match n {
                "k" => Some(Binding::Value(2.0)),
                "c" => Some(Binding::Value(3.0)),
                "X" => Some(Binding::Slot(1)),
                _ => None,
            })
            .unwrap();
        assert_eq!(c.eval(&[0.0, 5.0]).unwrap(), 30.0);
        assert!(c.as_constant().is_none());
        let k = Expr::var("k").compile(&|_: &str| Some(Binding::Value(4.0))).unwrap();
        assert_eq!(k.as_constant(), Some(4.0));
    }

    #[test]
    fn display_parenthesizes_minimally() {
        let e = Expr::binary(
            BinaryOp::Mul,
            Expr::binary(BinaryOp::Add, Expr::var("a"), Expr::var("b")),
            Expr::binary(BinaryOp::Sub, Expr::var("c"), Expr::binary(BinaryOp::Sub, Expr::var("d"), Expr::var("e"))),
        );
        assert_eq!(e.to_string(), "(a + b) * (c - (d - e))");
        let p = Expr::binary(BinaryOp::Pow, Expr::var("x"), Expr::binary(BinaryOp::Pow, Expr::var("y"), Expr::Const(2.0)));
        assert_eq!(p.to_string(), "x ^ y ^ 2");
    }
}
