use serde::{Deserialize, Serialize};

use super::{gpucb_maximize, SearchError, SearchResult, UcbConfig};
use crate::lang::Formula;
use crate::model::{Model, ParameterSpace};
use crate::sim::SimConfig;
use crate::smc::{
    bootstrap_noise, jsd, log_likelihood_counts, log_prior, posterior_noise, DesignMatrix, DirichletPosterior,
    GammaPrior, NoisyValue, Sampler, TargetDistribution,
};

/// How the noise on each objective evaluation is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Standard deviation over this many multinomial resamples.
    Bootstrap(usize),
    /// Analytic moments of the likelihood under the Dirichlet posterior
    /// (likelihood objectives only).
    Posterior,
    /// A fixed standard deviation.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub ucb: UcbConfig,
    /// Simulated trajectories per objective evaluation.
    pub runs: u64,
    pub sim: SimConfig,
    pub noise: NoiseMode,
}

/// Seed of the `index`-th evaluation (SplitMix64 finalizer on the pair).
pub fn evaluation_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_space(model: &Model, space: &ParameterSpace) -> Result<(), SearchError> {
    let probe = space.bindings(&space.axes.iter().map(|a| a.denormalize(0.0)).collect::<Vec<_>>());
    model.check_bindings(&probe).map_err(|e| SearchError::Task(e.to_string()))
}

fn simulate(
    sampler: &Sampler,
    space: &ParameterSpace,
    cfg: &TaskConfig,
    raw: &[f64],
    index: u64,
) -> Result<(DirichletPosterior, u64), String> {
    let seed = evaluation_seed(cfg.ucb.seed, index);
    let post = sampler.sample(&space.bindings(raw), cfg.runs, &cfg.sim, seed).map_err(|e| e.to_string())?;
    Ok((post, seed ^ 0xb007_5eed))
}

/// Maximum likelihood (no priors) or maximum a posteriori estimation of the
/// searched parameters from observed truth values.
pub fn identify(
    model: &Model,
    formulae: &[Formula],
    data: &DesignMatrix,
    space: &ParameterSpace,
    priors: &[GammaPrior],
    cfg: &TaskConfig,
) -> Result<SearchResult, SearchError> {
    if data.d() != formulae.len() {
        return Err(SearchError::Task(format!(
            "the observations have {} columns but {} formulae were given",
            data.d(),
            formulae.len()
        )));
    }
    check_space(model, space)?;
    let sampler = Sampler::new(model, formulae).map_err(|e| SearchError::Task(e.to_string()))?;
    let h = data.outcome_counts();
    let objective = |raw: &[f64], index: u64| -> Result<NoisyValue, String> {
        let lp = log_prior(&space.bindings(raw), priors).map_err(|e| e.to_string())?;
        let (post, bseed) = simulate(&sampler, space, cfg, raw, index)?;
        let v = match cfg.noise {
            NoiseMode::Bootstrap(b) => {
                bootstrap_noise(&post, |q| log_likelihood_counts(&h, q), b, bseed).map_err(|e| e.to_string())?
            }
            NoiseMode::Posterior => posterior_noise(&post, &h).map_err(|e| e.to_string())?,
            NoiseMode::Fixed(s) => NoisyValue { value: log_likelihood_counts(&h, post.predictive().probs()), std: s },
        };
        Ok(NoisyValue { value: v.value + lp, std: v.std })
    };
    gpucb_maximize(objective, space, &cfg.ucb)
}

/// Searches for parameters whose joint truth distribution is closest to
/// `target`, maximizing the negated Jensen-Shannon divergence.
pub fn design(
    model: &Model,
    formulae: &[Formula],
    target: &TargetDistribution,
    space: &ParameterSpace,
    cfg: &TaskConfig,
) -> Result<SearchResult, SearchError> {
    if target.d() != formulae.len() {
        return Err(SearchError::Task(format!(
            "the target covers {} formulae but {} were given",
            target.d(),
            formulae.len()
        )));
    }
    if cfg.noise == NoiseMode::Posterior {
        return Err(SearchError::Task("posterior noise applies to likelihood objectives only; use bootstrap or fixed".into()));
    }
    check_space(model, space)?;
    let sampler = Sampler::new(model, formulae).map_err(|e| SearchError::Task(e.to_string()))?;
    let p = target.probs();
    let objective = |raw: &[f64], index: u64| -> Result<NoisyValue, String> {
        let (post, bseed) = simulate(&sampler, space, cfg, raw, index)?;
        match cfg.noise {
            NoiseMode::Bootstrap(b) => bootstrap_noise(&post, |q| -jsd(p, q), b, bseed).map_err(|e| e.to_string()),
            _ => {
                let s = if let NoiseMode::Fixed(s) = cfg.noise { s } else { 0.0 };
                Ok(NoisyValue { value: -jsd(p, post.predictive().probs()), std: s })
            }
        }
    };
    let result = gpucb_maximize(objective, space, &cfg.ucb)?;
    if -result.best.value > 0.05 {
        log::warn!("poor fit: best Jensen-Shannon divergence {:.4} (ln 2 is the maximum)", -result.best.value);
    }
    Ok(result)
}
