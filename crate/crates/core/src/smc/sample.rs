use rayon::prelude::*;

use super::{outcome_index, DirichletPosterior, SmcError, MAX_FORMULAE};
use crate::lang::Formula;
use crate::model::{Bindings, Model};
use crate::monitor::Monitor;
use crate::sim::{Prepared, RngStream, SimConfig};

/// Simulates and monitors a fixed list of formulae on one model.
#[derive(Debug, Clone)]
pub struct Sampler {
    model: Model,
    monitors: Vec<Monitor>,
    /// Dirichlet pseudo-count per outcome.
    pub alpha: f64,
}

impl Sampler {
    pub fn new(model: &Model, formulae: &[Formula]) -> Result<Self, SmcError> {
        if formulae.is_empty() || formulae.len() > MAX_FORMULAE {
            return Err(SmcError::Invalid(format!("need 1 to {MAX_FORMULAE} formulae, got {}", formulae.len())));
        }
        let names = model.state_names();
        let monitors = formulae
            .iter()
            .map(|f| Monitor::new(f, &names).map_err(|e| SmcError::Invalid(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(Sampler { model: model.clone(), monitors, alpha: 1.0 })
    }

    pub fn d(&self) -> usize {
        self.monitors.len()
    }

    /// Joint truth vector of one trajectory.
    pub fn run_one(&self, prepared: &Prepared, cfg: &SimConfig, stream: RngStream) -> Result<Vec<bool>, SmcError> {
        let err = |message: String| SmcError::Run { index: stream.index, message };
        let traj = prepared.simulate(cfg, stream).map_err(|e| err(e.to_string()))?;
        self.monitors.iter().map(|m| m.check(&traj).map_err(|e| err(e.to_string()))).collect()
    }

    /// Runs `n_runs` trajectories (stream `i` for run `i`) and returns the
    /// posterior over joint outcomes.
    pub fn sample(&self, theta: &Bindings, n_runs: u64, cfg: &SimConfig, seed: u64) -> Result<DirichletPosterior, SmcError> {
        if n_runs == 0 {
            return Err(SmcError::Invalid("the number of runs must be at least 1".into()));
        }
        let prepared = Prepared::new(&self.model, theta).map_err(|e| SmcError::Invalid(e.to_string()))?;
        let outcomes: Vec<Result<usize, SmcError>> = (0..n_runs)
            .into_par_iter()
            .map(|i| self.run_one(&prepared, cfg, RngStream::new(seed, i)).map(|bits| outcome_index(&bits)))
            .collect();
        let mut post = DirichletPosterior::uniform(self.d(), self.alpha)?;
        for o in outcomes {
            post.observe(o?);
        }
        Ok(post)
    }
}

pub fn smc_sample(
    model: &Model,
    theta: &Bindings,
    formulae: &[Formula],
    n_runs: u64,
    cfg: &SimConfig,
    seed: u64,
) -> Result<DirichletPosterior, SmcError> {
    Sampler::new(model, formulae)?.sample(theta, n_runs, cfg, seed)
}
