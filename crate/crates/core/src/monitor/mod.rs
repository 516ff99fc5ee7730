//! Offline MiTL monitoring over piecewise-constant trajectories.

use thiserror::Error;

use crate::lang::{CmpOp, Formula, TimeBound};
use crate::model::{Binding, CompiledExpr, Expr, ExprError, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("signals have different horizons ({0} vs {1})")]
    HorizonMismatch(f64, f64),
    #[error("trajectory horizon {horizon} is shorter than the formula depth {depth}")]
    HorizonTooShort { horizon: f64, depth: f64 },
    #[error("atom mentions `{0}`, which is not a trajectory variable")]
    UnknownVariable(String),
    #[error("trajectory columns {found:?} do not match the monitored variables {expected:?}")]
    Columns { expected: Vec<String>, found: Vec<String> },
    #[error("evaluating atom at t = {time}: {source}")]
    Eval { time: f64, source: ExprError },
}

/// Finite union of disjoint, non-adjacent half-open intervals within `[0, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BooleanSignal {
    intervals: Vec<(f64, f64)>,
    horizon: f64,
}

impl BooleanSignal {
    pub fn empty(horizon: f64) -> Self {
        BooleanSignal { intervals: Vec::new(), horizon }
    }

    pub fn full(horizon: f64) -> Self {
        BooleanSignal { intervals: vec![(0.0, horizon)], horizon }
    }

    /// Builds the maximal form of an arbitrary interval list, clipped to `[0, T)`.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>, horizon: f64) -> Self {
        raw.retain(|&(l, u)| u > l);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (l, u) in raw {
            let (l, u) = (l.max(0.0), u.min(horizon));
            if u <= l {
                continue;
            }
            match intervals.last_mut() {
                Some(last) if l <= last.1 => last.1 = last.1.max(u),
                _ => intervals.push((l, u)),
            }
        }
        BooleanSignal { intervals, horizon }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn contains(&self, t: f64) -> bool {
        let i = self.intervals.partition_point(|&(l, _)| l <= t);
        i > 0 && t < self.intervals[i - 1].1
    }

    fn check(&self, other: &Self) -> Result<(), MonitorError> {
        if self.horizon != other.horizon {
            return Err(MonitorError::HorizonMismatch(self.horizon, other.horizon));
        }
        Ok(())
    }

    pub fn not(&self) -> Self {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut from = 0.0;
        for &(l, u) in &self.intervals {
            if l > from {
                out.push((from, l));
            }
            from = u;
        }
        if from < self.horizon {
            out.push((from, self.horizon));
        }
        BooleanSignal { intervals: out, horizon: self.horizon }
    }

    pub fn and(&self, other: &Self) -> Result<Self, MonitorError> {
        self.check(other)?;
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let l = a[i].0.max(b[j].0);
            let u = a[i].1.min(b[j].1);
            if l < u {
                out.push((l, u));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(BooleanSignal { intervals: out, horizon: self.horizon })
    }

    pub fn or(&self, other: &Self) -> Result<Self, MonitorError> {
        self.check(other)?;
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Ok(Self::from_intervals(all, self.horizon))
    }

    /// Time-bounded until: `t` holds iff some `t1` in `[t + T1, t + T2]`
    /// satisfies both signals and the left signal holds throughout `[t, t1]`.
    ///
    /// For a maximal left interval `I` and a maximal piece `[a, b)` of
    /// `I ∩ right`, the witnesses cover `[a - T2, b - T1) ∩ I`.
    pub fn until(&self, right: &Self, bound: TimeBound) -> Result<Self, MonitorError> {
        self.check(right)?;
        let mut out = Vec::new();
        let mut j = 0;
        for &(l, u) in &self.intervals {
            while j < right.intervals.len() && right.intervals[j].1 <= l {
                j += 1;
            }
            let mut k = j;
            while k < right.intervals.len() && right.intervals[k].0 < u {
                let a = right.intervals[k].0.max(l);
                let b = right.intervals[k].1.min(u);
                out.push(((a - bound.upper).max(l), (b - bound.lower).min(u)));
                k += 1;
            }
        }
        Ok(Self::from_intervals(out, self.horizon))
    }
}

/// An atom compiled against trajectory columns.
#[derive(Debug, Clone)]
struct Atom {
    lhs: CompiledExpr,
    op: CmpOp,
    rhs: CompiledExpr,
}

#[derive(Debug, Clone)]
enum Node {
    True,
    Atom(Atom),
    Not(Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Until(TimeBound, Box<Node>, Box<Node>),
}

/// A formula compiled for trajectories with fixed column names; reusable
/// across many trajectories.
#[derive(Debug, Clone)]
pub struct Monitor {
    root: Node,
    names: Vec<String>,
    depth: f64,
}

impl Monitor {
    pub fn new(formula: &Formula, names: &[String]) -> Result<Self, MonitorError> {
        let root = lower(&formula.desugar(), names)?;
        Ok(Monitor { root, names: names.to_vec(), depth: formula.depth() })
    }

    /// Satisfaction signal of the whole formula over `[0, T)`.
    pub fn signal(&self, traj: &Trajectory) -> Result<BooleanSignal, MonitorError> {
        if traj.names() != self.names.as_slice() {
            return Err(MonitorError::Columns { expected: self.names.clone(), found: traj.names().to_vec() });
        }
        eval(&self.root, traj)
    }

    /// Truth value at time 0.
    pub fn check(&self, traj: &Trajectory) -> Result<bool, MonitorError> {
        if traj.horizon() < self.depth {
            return Err(MonitorError::HorizonTooShort { horizon: traj.horizon(), depth: self.depth });
        }
        Ok(self.signal(traj)?.contains(0.0))
    }
}

fn lower(f: &Formula, names: &[String]) -> Result<Node, MonitorError> {
    let compile = |e: &Expr| -> Result<CompiledExpr, MonitorError> {
        let resolve = |n: &str| names.iter().position(|s| s == n).map(Binding::Slot);
        e.compile(&resolve).map_err(|err| match err {
            ExprError::Unbound(n) => MonitorError::UnknownVariable(n),
            source => MonitorError::Eval { time: 0.0, source },
        })
    };
    Ok(match f {
        Formula::True => Node::True,
        Formula::Atom { lhs, op, rhs } => Node::Atom(Atom { lhs: compile(lhs)?, op: *op, rhs: compile(rhs)? }),
        Formula::Not(a) => Node::Not(Box::new(lower(a, names)?)),
        Formula::And(a, b) => Node::And(Box::new(lower(a, names)?), Box::new(lower(b, names)?)),
        Formula::Or(a, b) => Node::Or(Box::new(lower(a, names)?), Box::new(lower(b, names)?)),
        Formula::Until { bound, left, right } => {
            Node::Until(*bound, Box::new(lower(left, names)?), Box::new(lower(right, names)?))
        }
        Formula::Eventually { .. } | Formula::Always { .. } => unreachable!("formula is desugared"),
    })
}

fn eval(node: &Node, traj: &Trajectory) -> Result<BooleanSignal, MonitorError> {
    let t = traj.horizon();
    match node {
        Node::True => Ok(BooleanSignal::full(t)),
        Node::Atom(a) => atom_signal(a, traj),
        Node::Not(a) => Ok(eval(a, traj)?.not()),
        Node::And(a, b) => eval(a, traj)?.and(&eval(b, traj)?),
        Node::Or(a, b) => eval(a, traj)?.or(&eval(b, traj)?),
        Node::Until(bound, a, b) => eval(a, traj)?.until(&eval(b, traj)?, *bound),
    }
}

fn atom_signal(a: &Atom, traj: &Trajectory) -> Result<BooleanSignal, MonitorError> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for i in 0..traj.len() {
        let (start, end) = traj.segment(i);
        if end <= start {
            continue;
        }
        let row = traj.row(i);
        let lhs = a.lhs.eval(row).map_err(|source| MonitorError::Eval { time: start, source })?;
        let rhs = a.rhs.eval(row).map_err(|source| MonitorError::Eval { time: start, source })?;
        if a.op.holds(lhs, rhs) {
            match out.last_mut() {
                Some(last) if last.1 == start => last.1 = end,
                _ => out.push((start, end)),
            }
        }
    }
    Ok(BooleanSignal { intervals: out, horizon: traj.horizon() })
}

/// Signal of a single comparison over a trajectory.
pub fn atomic_signal(traj: &Trajectory, lhs: &Expr, op: CmpOp, rhs: &Expr) -> Result<BooleanSignal, MonitorError> {
    let m = Monitor::new(&Formula::atom(lhs.clone(), op, rhs.clone()), traj.names())?;
    m.signal(traj)
}

/// Satisfaction signal of `formula` over the whole trajectory.
pub fn satisfaction(formula: &Formula, traj: &Trajectory) -> Result<BooleanSignal, MonitorError> {
    Monitor::new(formula, traj.names())?.signal(traj)
}

/// Whether `traj` satisfies `formula` at time 0.
pub fn monitor(formula: &Formula, traj: &Trajectory) -> Result<bool, MonitorError> {
    Monitor::new(formula, traj.names())?.check(traj)
}
