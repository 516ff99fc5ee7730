//! Parametric stochastic models: reaction networks (CTMC), SDE systems and
//! stochastic hybrid systems, plus parameter spaces and trajectories.

mod expr;
mod space;
mod trajectory;

use std::collections::BTreeMap;

use thiserror::Error;

pub use expr::{BinaryOp, Binding, CompiledExpr, Env, Expr, ExprError, UnaryOp};
pub use space::{Axis, ParameterSpace, Scale, SpaceError};
pub use trajectory::{Trajectory, TrajectoryError};

/// Parameter assignment by name. Ordered so that iteration is deterministic.
pub type Bindings = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate symbol `{0}`")]
    Duplicate(String),
    #[error("undeclared symbol `{name}` in {context}")]
    Undeclared { name: String, context: String },
    #[error("missing value for parameter `{0}`")]
    MissingParameter(String),
    #[error("`{0}` is not a parameter of the model")]
    UnknownParameter(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    pub initial: u64,
}

/// One reaction channel: stoichiometry vectors indexed like `ReactionNetwork::species`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub name: String,
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
    pub rate: Expr,
}

impl Reaction {
    /// Net population change when the reaction fires.
    pub fn change(&self) -> Vec<i64> {
        self.reactants
            .iter()
            .zip(&self.products)
            .map(|(&r, &p)| p as i64 - r as i64)
            .collect()
    }
}

/// Population CTMC written as a chemical reaction network.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub name: String,
    pub species: Vec<Species>,
    pub constants: Vec<(String, f64)>,
    pub parameters: Vec<String>,
    pub reactions: Vec<Reaction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub initial: f64,
}

/// Ito SDE `dV = F(V) dt + G(V) dW` with `G` an `n × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeSystem {
    pub name: String,
    pub variables: Vec<Variable>,
    pub drift: Vec<Expr>,
    /// Wiener channel names; one column of `diffusion` each.
    pub noise_channels: Vec<String>,
    /// Row `i` holds `G[i, ..]`; `None` entries are identically zero.
    pub diffusion: Vec<Vec<Option<Expr>>>,
    pub constants: Vec<(String, f64)>,
    pub parameters: Vec<String>,
}

/// Binary discrete component of a hybrid system (a gene, a switch).
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub name: String,
    pub initially_on: bool,
    pub on_to_off: Expr,
    pub off_to_on: Expr,
}

/// SDE whose drift and diffusion may read binary modes that jump with
/// state-dependent rates.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSystem {
    pub modes: Vec<Mode>,
    /// Continuous part; its constants and parameters are those of the whole system.
    pub continuous: SdeSystem,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ctmc(ReactionNetwork),
    Sde(SdeSystem),
    Hybrid(HybridSystem),
}

impl Model {
    pub fn name(&self) -> &str {
        match self {
            Model::Ctmc(n) => &n.name,
            Model::Sde(s) => &s.name,
            Model::Hybrid(h) => &h.continuous.name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Ctmc(_) => "ctmc",
            Model::Sde(_) => "sde",
            Model::Hybrid(_) => "hybrid",
        }
    }

    pub fn parameters(&self) -> &[String] {
        match self {
            Model::Ctmc(n) => &n.parameters,
            Model::Sde(s) => &s.parameters,
            Model::Hybrid(h) => &h.continuous.parameters,
        }
    }

    pub fn constants(&self) -> &[(String, f64)] {
        match self {
            Model::Ctmc(n) => &n.constants,
            Model::Sde(s) => &s.constants,
            Model::Hybrid(h) => &h.continuous.constants,
        }
    }

    /// Column order of the trajectories produced for this model: species,
    /// or continuous variables followed by modes.
    pub fn state_names(&self) -> Vec<String> {
        match self {
            Model::Ctmc(n) => n.species.iter().map(|s| s.name.clone()).collect(),
            Model::Sde(s) => s.variables.iter().map(|v| v.name.clone()).collect(),
            Model::Hybrid(h) => h
                .continuous
                .variables
                .iter()
                .map(|v| v.name.clone())
                .chain(h.modes.iter().map(|m| m.name.clone()))
                .collect(),
        }
    }

    /// Checks that `values` binds every parameter and nothing else.
    pub fn check_bindings(&self, values: &Bindings) -> Result<(), ModelError> {
        check_bindings(self.parameters(), values)
    }
}

pub(crate) fn check_bindings(parameters: &[String], values: &Bindings) -> Result<(), ModelError> {
    for p in parameters {
        if !values.contains_key(p) {
            return Err(ModelError::MissingParameter(p.clone()));
        }
    }
    for k in values.keys() {
        if !parameters.contains(k) {
            return Err(ModelError::UnknownParameter(k.clone()));
        }
    }
    Ok(())
}

/// Resolver for compiling model expressions: state names map to slots,
/// constants and parameters to their values.
pub(crate) fn scope<'a>(
    state: &'a [String],
    constants: &'a [(String, f64)],
    values: &'a Bindings,
) -> impl Fn(&str) -> Option<Binding> + 'a {
    move |name: &str| {
        if let Some(i) = state.iter().position(|s| s == name) {
            return Some(Binding::Slot(i));
        }
        if let Some((_, v)) = constants.iter().find(|(n, _)| n == name) {
            return Some(Binding::Value(*v));
        }
        values.get(name).map(|v| Binding::Value(*v))
    }
}
