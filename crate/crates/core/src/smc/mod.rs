//! Bayesian statistical model checking of joint formula truth values and
//! the objectives built on it.
//!
//! Outcomes of `d` formulae are indexed by reading the truth vector as a
//! binary number with formula 0 as the most significant bit.

mod io;
mod noise;
mod sample;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::model::Bindings;

pub use io::{read_observations, read_target, write_observations};
pub use noise::{bootstrap_noise, posterior_noise, NoisyValue};
pub use sample::{smc_sample, Sampler};

/// Largest number of jointly tracked formulae (2^d outcomes are stored).
pub const MAX_FORMULAE: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmcError {
    #[error("{0}")]
    Invalid(String),
    #[error("trajectory {index}: {message}")]
    Run { index: u64, message: String },
    #[error("parameter `{name}` must be positive for its Gamma prior, got {value}")]
    NonPositive { name: String, value: f64 },
    #[error("no value for prior parameter `{0}`")]
    MissingPrior(String),
}

pub fn outcome_index(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
}

/// Bitstring label of outcome `j` for `d` formulae, e.g. `"10"`.
pub fn outcome_label(j: usize, d: usize) -> String {
    (0..d).map(|i| if (j >> (d - 1 - i)) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Observed truth values: `N` columns of `d` bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<bool>>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<bool>>) -> Result<Self, SmcError> {
        if names.is_empty() || names.len() > MAX_FORMULAE {
            return Err(SmcError::Invalid(format!("need 1 to {MAX_FORMULAE} formulae, got {}", names.len())));
        }
        if columns.is_empty() {
            return Err(SmcError::Invalid("design matrix has no observations".into()));
        }
        if let Some(i) = columns.iter().position(|c| c.len() != names.len()) {
            return Err(SmcError::Invalid(format!(
                "observation {} has {} truth values, expected {}",
                i + 1,
                columns[i].len(),
                names.len()
            )));
        }
        Ok(DesignMatrix { names, columns })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<bool>] {
        &self.columns
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    /// `h_j`: occurrences of each joint outcome.
    pub fn outcome_counts(&self) -> Vec<u64> {
        let mut h = vec![0; 1 << self.d()];
        for c in &self.columns {
            h[outcome_index(c)] += 1;
        }
        h
    }
}

/// Dirichlet posterior over the `2^d` joint outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPosterior {
    prior: Vec<f64>,
    counts: Vec<u64>,
}

impl DirichletPosterior {
    pub fn uniform(d: usize, alpha: f64) -> Result<Self, SmcError> {
        if d == 0 || d > MAX_FORMULAE {
            return Err(SmcError::Invalid(format!("need 1 to {MAX_FORMULAE} formulae, got {d}")));
        }
        Self::with_prior(vec![alpha; 1 << d])
    }

    pub fn with_prior(prior: Vec<f64>) -> Result<Self, SmcError> {
        if !prior.len().is_power_of_two() || prior.len() < 2 {
            return Err(SmcError::Invalid(format!("prior length {} is not 2^d", prior.len())));
        }
        if prior.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(SmcError::Invalid("Dirichlet pseudo-counts must be positive".into()));
        }
        let counts = vec![0; prior.len()];
        Ok(DirichletPosterior { prior, counts })
    }

    pub fn observe(&mut self, outcome: usize) {
        self.counts[outcome] += 1;
    }

    pub fn add_counts(&mut self, counts: &[u64]) -> Result<(), SmcError> {
        if counts.len() != self.counts.len() {
            return Err(SmcError::Invalid(format!("expected {} counts, got {}", self.counts.len(), counts.len())));
        }
        for (c, k) in self.counts.iter_mut().zip(counts) {
            *c += k;
        }
        Ok(())
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `α_j + k_j`.
    pub fn params(&self) -> Vec<f64> {
        self.prior.iter().zip(&self.counts).map(|(a, &k)| a + k as f64).collect()
    }

    pub fn predictive(&self) -> TargetDistribution {
        TargetDistribution { probs: predictive_from(&self.prior, &self.counts) }
    }
}

pub(crate) fn predictive_from(prior: &[f64], counts: &[u64]) -> Vec<f64> {
    let total: f64 = prior.iter().sum::<f64>() + counts.iter().sum::<u64>() as f64;
    prior.iter().zip(counts).map(|(a, &k)| (a + k as f64) / total).collect()
}

/// Probability vector over `2^d` outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    probs: Vec<f64>,
}

impl TargetDistribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self, SmcError> {
        Self::with_tolerance(probs, Self::TOLERANCE)
    }

    /// Accepts sums within `tol` of one and renormalizes exactly.
    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self, SmcError> {
        if !probs.len().is_power_of_two() || probs.len() < 2 {
            return Err(SmcError::Invalid(format!("{} probabilities is not 2^d for any d >= 1", probs.len())));
        }
        if probs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(SmcError::Invalid("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(SmcError::Invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(TargetDistribution { probs: probs.iter().map(|p| p / sum).collect() })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn d(&self) -> usize {
        self.probs.len().trailing_zeros() as usize
    }
}

/// `Σ_j h_j log q_j`; `-inf` if an observed outcome has zero probability.
pub fn log_likelihood_counts(h: &[u64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&hj, &qj) in h.iter().zip(q) {
        if hj == 0 {
            continue;
        }
        if qj <= 0.0 {
            log::warn!("observed outcome has zero predicted probability");
            return f64::NEG_INFINITY;
        }
        total += hj as f64 * qj.ln();
    }
    total
}

pub fn log_likelihood(data: &DesignMatrix, q: &TargetDistribution) -> Result<f64, SmcError> {
    if q.d() != data.d() {
        return Err(SmcError::Invalid(format!("{} formulae in the data, {} in the distribution", data.d(), q.d())));
    }
    Ok(log_likelihood_counts(&data.outcome_counts(), q.probs()))
}

/// Gamma prior on one parameter, given by shape and mean (rate = shape / mean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub name: String,
    pub shape: f64,
    pub mean: f64,
}

impl GammaPrior {
    pub fn new(name: impl Into<String>, shape: f64, mean: f64) -> Option<Self> {
        (shape > 0.0 && mean > 0.0 && shape.is_finite() && mean.is_finite())
            .then(|| GammaPrior { name: name.into(), shape, mean })
    }

    pub fn rate(&self) -> f64 {
        self.shape / self.mean
    }

    pub fn ln_pdf(&self, theta: f64) -> Result<f64, SmcError> {
        if !(theta > 0.0) {
            return Err(SmcError::NonPositive { name: self.name.clone(), value: theta });
        }
        let (s, r) = (self.shape, self.rate());
        Ok((s - 1.0) * theta.ln() - r * theta + s * r.ln() - ln_gamma(s))
    }

    pub fn mode(&self) -> f64 {
        (self.shape - 1.0).max(0.0) / self.rate()
    }
}

/// Sum of the log prior densities at `theta`.
pub fn log_prior(theta: &Bindings, priors: &[GammaPrior]) -> Result<f64, SmcError> {
    let mut total = 0.0;
    for p in priors {
        let v = *theta.get(&p.name).ok_or_else(|| SmcError::MissingPrior(p.name.clone()))?;
        total += p.ln_pdf(v)?;
    }
    Ok(total)
}

pub fn log_posterior(
    data: &DesignMatrix,
    q: &TargetDistribution,
    theta: &Bindings,
    priors: &[GammaPrior],
) -> Result<f64, SmcError> {
    Ok(log_likelihood(data, q)? + log_prior(theta, priors)?)
}

/// Jensen–Shannon divergence with natural logarithms, `0 log 0 = 0`.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let half = |a: f64, b: f64| if a > 0.0 { a * (2.0 * a / (a + b)).ln() } else { 0.0 };
    let s: f64 = p.iter().zip(q).map(|(&a, &b)| half(a, b) + half(b, a)).sum();
    (0.5 * s).max(0.0)
}
