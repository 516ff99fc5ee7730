use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{predictive_from, DirichletPosterior, SmcError};

/// An objective value with the standard deviation of its estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyValue {
    pub value: f64,
    pub std: f64,
}

impl NoisyValue {
    pub fn exact(value: f64) -> Self {
        NoisyValue { value, std: 0.0 }
    }
}

/// Multinomial draw of `n` items with probabilities `p` via conditional binomials.
fn multinomial(n: u64, p: &[f64], rng: &mut ChaCha8Rng, out: &mut [u64]) {
    let mut left = n;
    let mut mass = 1.0;
    for (j, &pj) in p.iter().enumerate() {
        if left == 0 || j + 1 == p.len() {
            out[j] = left;
            left = 0;
            continue;
        }
        let frac = if mass > 0.0 { (pj / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(left, frac).map(|b| b.sample(rng)).unwrap_or(0);
        out[j] = k;
        left -= k;
        mass -= pj;
    }
}

/// Bootstrap estimate of the noise on `objective(predictive)`.
///
/// Resamples `b` multinomial count vectors of the same total from the
/// empirical outcome frequencies, recomputes the predictive distribution
/// (with the same prior) and the objective for each, and reports the
/// objective at the original counts with the standard deviation over resamples.
pub fn bootstrap_noise(
    post: &DirichletPosterior,
    objective: impl Fn(&[f64]) -> f64,
    b: usize,
    seed: u64,
) -> Result<NoisyValue, SmcError> {
    if b < 2 {
        return Err(SmcError::Invalid(format!("bootstrap needs at least 2 resamples, got {b}")));
    }
    let counts = post.counts();
    let n = post.total();
    if n == 0 {
        return Err(SmcError::Invalid("bootstrap needs at least one simulated run".into()));
    }
    let value = objective(&post.predictive().probs);
    let freq: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resampled = vec![0u64; counts.len()];
    let mut samples = Vec::with_capacity(b);
    for _ in 0..b {
        multinomial(n, &freq, &mut rng, &mut resampled);
        samples.push(objective(&predictive_from(post.prior(), &resampled)));
    }
    let finite: Vec<f64> = samples.into_iter().filter(|v| v.is_finite()).collect();
    let std = if finite.len() < 2 {
        0.0
    } else {
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (finite.len() - 1) as f64).sqrt()
    };
    Ok(NoisyValue { value, std })
}

/// Log of the multinomial Beta function `Π Γ(a_j) / Γ(Σ a_j)`.
fn ln_multi_beta(a: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut acc = 0.0;
    for x in a {
        acc += ln_gamma(x);
        sum += x;
    }
    acc - ln_gamma(sum)
}

/// Analytic noise of the likelihood under the Dirichlet posterior.
///
/// `E[L] = B(a + h) / B(a)` and `E[L^2] = B(a + 2h) / B(a)` with `a = α + k`.
/// The value is `log E[L]`; the std is the delta-method `sqrt(VAR[L]) / E[L]`.
pub fn posterior_noise(post: &DirichletPosterior, h: &[u64]) -> Result<NoisyValue, SmcError> {
    let a = post.params();
    if h.len() != a.len() {
        return Err(SmcError::Invalid(format!("expected {} outcome counts, got {}", a.len(), h.len())));
    }
    let base = ln_multi_beta(a.iter().copied());
    let ln_e = ln_multi_beta(a.iter().zip(h).map(|(x, &k)| x + k as f64)) - base;
    let ln_e2 = ln_multi_beta(a.iter().zip(h).map(|(x, &k)| x + 2.0 * k as f64)) - base;
    let rel_var = (ln_e2 - 2.0 * ln_e).exp_m1().max(0.0);
    Ok(NoisyValue { value: ln_e, std: rel_var.sqrt() })
}
