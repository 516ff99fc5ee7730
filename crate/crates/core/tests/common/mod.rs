//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use logicfit::lang::{CmpOp, Formula, TimeBound};
use logicfit::model::{Expr, Trajectory};
use rand::Rng;

/// Piecewise-constant single-variable signal with integer breakpoints.
#[derive(Debug, Clone)]
pub struct Signal {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub horizon: f64,
}

impl Signal {
    pub fn random(rng: &mut impl Rng, horizon: u32) -> Self {
        let mut times = vec![0.0];
        let mut t = 0;
        loop {
            t += rng.random_range(1..5);
            if t >= horizon {
                break;
            }
            times.push(t as f64);
        }
        let values = times.iter().map(|_| rng.random_range(0..6) as f64).collect();
        Signal { times, values, horizon: horizon as f64 }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.times.iter().rposition(|&s| s <= t).unwrap_or(0);
        self.values[i]
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(
            vec!["x".into()],
            self.times.clone(),
            self.values.iter().map(|&v| vec![v]).collect(),
            self.horizon,
        )
        .unwrap()
    }
}

fn random_bound(rng: &mut impl Rng) -> TimeBound {
    let a = rng.random_range(0..4) as f64;
    let b = a + rng.random_range(1..5) as f64;
    TimeBound::new(a, b).unwrap()
}

pub fn random_formula(rng: &mut impl Rng, depth: u32) -> Formula {
    let leaf = depth == 0 || rng.random_bool(0.25);
    if leaf {
        if rng.random_bool(0.1) {
            return Formula::True;
        }
        let op = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq][rng.random_range(0..5)];
        return Formula::atom(Expr::Var("x".into()), op, Expr::Const(rng.random_range(0..6) as f64));
    }
    match rng.random_range(0..7) {
        0 => Formula::not(random_formula(rng, depth - 1)),
        1 => Formula::and(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        2 => Formula::or(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        3 | 4 => Formula::until(random_bound(rng), random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        5 => Formula::eventually(random_bound(rng), random_formula(rng, depth - 1)),
        _ => Formula::always(random_bound(rng), random_formula(rng, depth - 1)),
    }
}

/// Pointwise reference semantics. Truth is evaluated on `[0, T)`; every
/// formula is false from `T` on. Quantifiers are resolved on the finite
/// set of critical points where any subformula can change value.
pub struct BruteForce<'a> {
    sig: &'a Signal,
    critical: Vec<f64>,
}

fn shifts(f: &Formula) -> BTreeSet<i64> {
    let mut s = BTreeSet::from([0]);
    let add_shifted = |inner: &BTreeSet<i64>, b: &TimeBound, s: &mut BTreeSet<i64>| {
        for &x in inner {
            s.insert(x);
            s.insert(x + b.lower as i64);
            s.insert(x + b.upper as i64);
        }
    };
    match f {
        Formula::True | Formula::Atom { .. } => {}
        Formula::Not(a) => s.extend(shifts(a)),
        Formula::And(a, b) | Formula::Or(a, b) => {
            s.extend(shifts(a));
            s.extend(shifts(b));
        }
        Formula::Until { bound, left, right } => {
            let mut inner = shifts(left);
            inner.extend(shifts(right));
            add_shifted(&inner, bound, &mut s);
        }
        Formula::Eventually { bound, sub } | Formula::Always { bound, sub } => {
            add_shifted(&shifts(sub), bound, &mut s);
        }
    }
    s
}

impl<'a> BruteForce<'a> {
    pub fn new(sig: &'a Signal, f: &Formula) -> Self {
        let mut pts = BTreeSet::new();
        for &tau in sig.times.iter().chain([sig.horizon].iter()) {
            for s in shifts(f) {
                let c = tau as i64 - s;
                if c >= 0 && (c as f64) <= sig.horizon {
                    pts.insert(c);
                }
            }
        }
        BruteForce { sig, critical: pts.into_iter().map(|c| c as f64).collect() }
    }

    fn atom(&self, lhs: &Expr, op: CmpOp, rhs: &Expr, t: f64) -> bool {
        let val = |e: &Expr| match e {
            Expr::Var(_) => self.sig.value_at(t),
            Expr::Const(c) => *c,
            other => panic!("oracle atoms are `x op c`, got {other:?}"),
        };
        let (l, r) = (val(lhs), val(rhs));
        match op {
            CmpOp::Lt => l < r,
            CmpOp::Le => l <= r,
            CmpOp::Gt => l > r,
            CmpOp::Ge => l >= r,
            CmpOp::Eq => l == r,
        }
    }

    /// Candidate witnesses in `[lo, hi]`: `lo` and every critical point in `(lo, hi]`.
    fn window(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut v = vec![lo];
        v.extend(self.critical.iter().copied().filter(|&c| c > lo && c <= hi));
        v
    }

    pub fn sat(&self, f: &Formula, t: f64) -> bool {
        if t >= self.sig.horizon {
            return false;
        }
        match f {
            Formula::True => true,
            Formula::Atom { lhs, op, rhs } => self.atom(lhs, *op, rhs, t),
            Formula::Not(a) => !self.sat(a, t),
            Formula::And(a, b) => self.sat(a, t) && self.sat(b, t),
            Formula::Or(a, b) => self.sat(a, t) || self.sat(b, t),
            Formula::Until { bound, left, right } => {
                self.window(t + bound.lower, t + bound.upper).into_iter().any(|t1| {
                    self.sat(right, t1)
                        && self.sat(left, t1)
                        && self.window(t, t1).into_iter().filter(|&s| s < t1).all(|s| self.sat(left, s))
                })
            }
            Formula::Eventually { bound, sub } => {
                self.window(t + bound.lower, t + bound.upper).into_iter().any(|t1| self.sat(sub, t1))
            }
            Formula::Always { bound, sub } => self
                .window(t + bound.lower, t + bound.upper)
                .into_iter()
                .filter(|&s| s < self.sig.horizon)
                .all(|s| self.sat(sub, s)),
        }
    }
}

/// `P(N(1) > 3)` for a Poisson process of rate `mu`.
pub fn poisson_p(mu: f64) -> f64 {
    let mut term = (-mu).exp();
    let mut cdf = term;
    for n in 1..=3 {
        term *= mu / n as f64;
        cdf += term;
    }
    1.0 - cdf
}

pub fn poisson_loglik(mu: f64, k_true: u64, n: u64) -> f64 {
    let p = poisson_p(mu);
    k_true as f64 * p.ln() + (n - k_true) as f64 * (1.0 - p).ln()
}

/// Maximizer of the Poisson log-likelihood: solves `p(mu) = k / n` by
/// bisection (p is increasing in `mu`).
pub fn poisson_argmax(k_true: u64, n: u64) -> f64 {
    let target = k_true as f64 / n as f64;
    let (mut lo, mut hi) = (1e-9, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if poisson_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
