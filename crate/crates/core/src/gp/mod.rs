//! Gaussian-process regression with a squared-exponential kernel and
//! per-point noise variances.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("{0}")]
    Invalid(String),
    #[error("covariance matrix is not positive definite even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
}

/// `k(x, x') = γ exp(-‖x - x'‖² / λ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub amplitude: f64,
    pub lengthscale: f64,
}

impl Kernel {
    pub const FLOOR: f64 = 1e-8;
    pub const CEILING: f64 = 1e8;

    pub fn new(amplitude: f64, lengthscale: f64) -> Result<Self, GpError> {
        if !(amplitude > 0.0 && lengthscale > 0.0 && amplitude.is_finite() && lengthscale.is_finite()) {
            return Err(GpError::Invalid(format!("kernel needs positive finite (γ, λ), got ({amplitude}, {lengthscale})")));
        }
        Ok(Kernel { amplitude, lengthscale })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.amplitude * (-sq_dist(x, y) / (self.lengthscale * self.lengthscale)).exp()
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Observations in normalized input space with their noise variances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    noise: Vec<f64>,
    /// Number of raw observations merged into each point.
    merged: Vec<usize>,
}

impl TrainingSet {
    /// Inputs closer than this are treated as the same point.
    pub const MERGE_RADIUS: f64 = 1e-10;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    /// Adds an observation. A point within [`Self::MERGE_RADIUS`] of an
    /// existing one is merged into it by inverse-variance weighting.
    pub fn push(&mut self, x: Vec<f64>, y: f64, noise_var: f64) -> Result<(), GpError> {
        if let Some(d) = self.dim() {
            if x.len() != d {
                return Err(GpError::Invalid(format!("point of dimension {} in a {d}-dimensional set", x.len())));
            }
        }
        if x.iter().any(|v| !v.is_finite()) || !y.is_finite() || !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(GpError::Invalid(format!("non-finite observation at {x:?}: y = {y}, noise = {noise_var}")));
        }
        let r2 = Self::MERGE_RADIUS * Self::MERGE_RADIUS;
        if let Some(i) = self.inputs.iter().position(|p| sq_dist(p, &x) <= r2) {
            let (y0, v0, n0) = (self.targets[i], self.noise[i], self.merged[i]);
            let (ym, vm) = if v0 == 0.0 && noise_var == 0.0 {
                ((y0 * n0 as f64 + y) / (n0 + 1) as f64, 0.0)
            } else if v0 == 0.0 {
                (y0, 0.0)
            } else if noise_var == 0.0 {
                (y, 0.0)
            } else {
                let (w0, w1) = (1.0 / v0, 1.0 / noise_var);
                ((w0 * y0 + w1 * y) / (w0 + w1), 1.0 / (w0 + w1))
            };
            self.targets[i] = ym;
            self.noise[i] = vm;
            self.merged[i] += 1;
            return Ok(());
        }
        self.inputs.push(x);
        self.targets.push(y);
        self.noise.push(noise_var);
        self.merged.push(1);
        Ok(())
    }

    fn mean_target(&self) -> f64 {
        self.targets.iter().sum::<f64>() / self.targets.len().max(1) as f64
    }

    /// Sample variance of the targets (zero for fewer than two points).
    pub fn target_variance(&self) -> f64 {
        let n = self.targets.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_target();
        self.targets.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }
}

/// Predictive mean and variance at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A GP conditioned on a training set: Cholesky factor of `K + diag(σ²)`
/// and the weights `K̂⁻¹ (y - ȳ)`.
#[derive(Debug, Clone)]
pub struct FittedGp {
    kernel: Kernel,
    inputs: Vec<Vec<f64>>,
    offset: f64,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    jitter: f64,
    max_noise: f64,
}

fn gram(train: &TrainingSet, kern: &Kernel) -> DMatrix<f64> {
    let n = train.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kern.amplitude + train.noise[i];
        for j in 0..i {
            let v = kern.eval(&train.inputs[i], &train.inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky with the jitter ladder `1e-10 γ ... 1e-6 γ`.
fn factor(k: DMatrix<f64>, amplitude: f64) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = 0.0;
    for e in [1e-10, 1e-9, 1e-8, 1e-7, 1e-6] {
        jitter = e * amplitude;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
    }
    Err(GpError::IllConditioned { jitter })
}

pub fn fit(train: &TrainingSet, kern: &Kernel) -> Result<FittedGp, GpError> {
    if train.is_empty() {
        return Err(GpError::Invalid("cannot fit a GP to an empty training set".into()));
    }
    let offset = train.mean_target();
    let (chol, jitter) = factor(gram(train, kern), kern.amplitude)?;
    let y = DVector::from_iterator(train.len(), train.targets.iter().map(|t| t - offset));
    let weights = chol.solve(&y);
    Ok(FittedGp {
        kernel: *kern,
        inputs: train.inputs.clone(),
        offset,
        chol,
        weights,
        jitter,
        max_noise: train.noise.iter().cloned().fold(0.0, f64::max),
    })
}

impl FittedGp {
    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    fn kvec(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|p| self.kernel.eval(x, p)))
    }

    pub fn predict(&self, x: &[f64]) -> Posterior {
        let k = self.kvec(x);
        let mean = self.offset + k.dot(&self.weights);
        let v = self.chol.l().solve_lower_triangular(&k).expect("Cholesky factor is non-singular");
        let variance = (self.kernel.amplitude - v.norm_squared()).clamp(0.0, self.kernel.amplitude + self.max_noise);
        Posterior { mean, variance }
    }

    /// Kernel vector with its Jacobian (`N × d`) and per-point Hessians.
    fn kernel_terms(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>, Vec<DMatrix<f64>>) {
        let n = self.inputs.len();
        let d = x.len();
        let l2 = self.kernel.lengthscale * self.kernel.lengthscale;
        let mut k = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, d);
        let mut hess = Vec::with_capacity(n);
        for (i, p) in self.inputs.iter().enumerate() {
            let ki = self.kernel.eval(x, p);
            let diff: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
            k[i] = ki;
            let mut h = DMatrix::zeros(d, d);
            for a in 0..d {
                jac[(i, a)] = -2.0 * ki * diff[a] / l2;
                for b in 0..d {
                    h[(a, b)] = ki * 4.0 * diff[a] * diff[b] / (l2 * l2);
                }
                h[(a, a)] -= 2.0 * ki / l2;
            }
            hess.push(h);
        }
        (k, jac, hess)
    }

    /// Posterior mean with analytic gradient and Hessian.
    pub fn mean_derivatives(&self, x: &[f64]) -> Derivatives {
        let (k, jac, hess) = self.kernel_terms(x);
        let d = x.len();
        let mut h = DMatrix::zeros(d, d);
        for (i, hi) in hess.iter().enumerate() {
            h += hi * self.weights[i];
        }
        Derivatives { value: self.offset + k.dot(&self.weights), gradient: jac.transpose() * &self.weights, hessian: h }
    }

    /// Upper confidence bound `μ + β σ` with analytic gradient and Hessian.
    pub fn ucb_derivatives(&self, x: &[f64], beta: f64) -> Derivatives {
        let (k, jac, hess) = self.kernel_terms(x);
        let d = x.len();
        let mut mean_h = DMatrix::zeros(d, d);
        for (i, hi) in hess.iter().enumerate() {
            mean_h += hi * self.weights[i];
        }
        let mean = self.offset + k.dot(&self.weights);
        let mean_g = jac.transpose() * &self.weights;
        if beta == 0.0 {
            return Derivatives { value: mean, gradient: mean_g, hessian: mean_h };
        }
        let kinv_k = self.chol.solve(&k);
        let s = (self.kernel.amplitude - k.dot(&kinv_k)).max(0.0);
        let sd = s.sqrt();
        if s < 1e-14 {
            // σ is not differentiable at zero variance; use the mean's derivatives.
            return Derivatives { value: mean + beta * sd, gradient: mean_g, hessian: mean_h };
        }
        let kinv_j = self.chol.solve(&jac);
        let s_g = -2.0 * jac.transpose() * &kinv_k;
        let mut s_h = -2.0 * jac.transpose() * kinv_j;
        for (i, hi) in hess.iter().enumerate() {
            s_h -= hi * (2.0 * kinv_k[i]);
        }
        let gradient = &mean_g + &s_g * (beta / (2.0 * sd));
        let hessian = mean_h + (&s_h / (2.0 * sd) - &s_g * s_g.transpose() / (4.0 * s * sd)) * beta;
        Derivatives { value: mean + beta * sd, gradient, hessian }
    }
}

/// Log marginal likelihood of the centered targets and its gradient in
/// `(log γ, log λ)`.
pub fn log_evidence(train: &TrainingSet, kern: &Kernel) -> Result<(f64, [f64; 2]), GpError> {
    if train.is_empty() {
        return Err(GpError::Invalid("empty training set".into()));
    }
    let n = train.len();
    let k = gram(train, kern);
    let (chol, _) = factor(k, kern.amplitude)?;
    let offset = train.mean_target();
    let y = DVector::from_iterator(n, train.targets.iter().map(|t| t - offset));
    let alpha = chol.solve(&y);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // d/dθ = ½ tr((α αᵀ - K̂⁻¹) ∂K̂/∂θ)
    let kinv = chol.inverse();
    let l2 = kern.lengthscale * kern.lengthscale;
    let (mut g_amp, mut g_len) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let kij = kern.eval(&train.inputs[i], &train.inputs[j]);
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            g_amp += w * kij;
            g_len += w * kij * 2.0 * sq_dist(&train.inputs[i], &train.inputs[j]) / l2;
        }
    }
    Ok((value, [0.5 * g_amp, 0.5 * g_len]))
}

fn clamp_log(v: f64) -> f64 {
    v.clamp(Kernel::FLOOR.ln(), Kernel::CEILING.ln())
}

fn evidence_at(train: &TrainingSet, p: [f64; 2]) -> Option<(f64, [f64; 2])> {
    let k = Kernel { amplitude: p[0].exp(), lengthscale: p[1].exp() };
    log_evidence(train, &k).ok().filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
}

/// Local ascent in `(log γ, log λ)`: a Newton step when the finite-difference
/// Hessian of the analytic gradient is negative definite, a gradient step
/// otherwise, with backtracking so the evidence never decreases.
fn ascend(train: &TrainingSet, start: [f64; 2]) -> Option<([f64; 2], f64)> {
    let mut p = [clamp_log(start[0]), clamp_log(start[1])];
    let (mut f, mut g) = evidence_at(train, p)?;
    let mut step_scale = 1.0;
    for _ in 0..200 {
        let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gnorm < 1e-7 {
            break;
        }
        let h = 1e-5;
        let mut hess = [[0.0; 2]; 2];
        let mut curvature_ok = true;
        for a in 0..2 {
            let mut q = p;
            q[a] += h;
            match evidence_at(train, q) {
                Some((_, gq)) => {
                    hess[0][a] = (gq[0] - g[0]) / h;
                    hess[1][a] = (gq[1] - g[1]) / h;
                }
                None => curvature_ok = false,
            }
        }
        let h01 = 0.5 * (hess[0][1] + hess[1][0]);
        let det = hess[0][0] * hess[1][1] - h01 * h01;
        let mut dir = if curvature_ok && hess[0][0] < 0.0 && det > 0.0 {
            [-(hess[1][1] * g[0] - h01 * g[1]) / det, -(-h01 * g[0] + hess[0][0] * g[1]) / det]
        } else {
            [g[0] / gnorm * step_scale, g[1] / gnorm * step_scale]
        };
        let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        if norm > 2.0 {
            dir = [dir[0] * 2.0 / norm, dir[1] * 2.0 / norm];
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-8 {
            let q = [clamp_log(p[0] + t * dir[0]), clamp_log(p[1] + t * dir[1])];
            if let Some((fq, gq)) = evidence_at(train, q) {
                if fq > f {
                    let improvement = fq - f;
                    p = q;
                    f = fq;
                    g = gq;
                    moved = true;
                    step_scale = (step_scale * 2.0).min(4.0);
                    if improvement < 1e-10 {
                        return Some((p, f));
                    }
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            step_scale *= 0.25;
            if step_scale < 1e-6 {
                break;
            }
        }
    }
    Some((p, f))
}

/// Multi-start evidence maximization. Starts are log-uniform in
/// `γ ∈ [0.01, 100] var(y)` and `λ ∈ [0.05, 4]`.
pub fn optimize_hyperparams(train: &TrainingSet, n_starts: usize, seed: u64) -> Kernel {
    let var = train.target_variance().max(Kernel::FLOOR);
    let fallback = Kernel { amplitude: var, lengthscale: 1.0 };
    if train.len() < 3 {
        log::warn!("optimizing GP hyperparameters on only {} points", train.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<([f64; 2], f64)> = None;
    for _ in 0..n_starts.max(1) {
        let start = [
            (var * 0.01).ln() + rng.random::<f64>() * (1e4f64).ln(),
            0.05f64.ln() + rng.random::<f64>() * (80f64).ln(),
        ];
        if let Some((p, f)) = ascend(train, start) {
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((p, f));
            }
        }
    }
    let Some((p, _)) = best else {
        log::warn!("all hyperparameter starts failed; using γ = var(y), λ = 1");
        return fallback;
    };
    let kern = Kernel { amplitude: p[0].exp(), lengthscale: p[1].exp() };
    let near = |v: f64, bound: f64| (v.ln() - bound.ln()).abs() < 1e-6;
    if near(kern.amplitude, Kernel::FLOOR) || near(kern.lengthscale, Kernel::FLOOR) {
        log::warn!("GP hyperparameters reached the floor {:e}: data look constant", Kernel::FLOOR);
    }
    if near(kern.amplitude, Kernel::CEILING) || near(kern.lengthscale, Kernel::CEILING) {
        log::warn!("GP hyperparameters reached the ceiling {:e}", Kernel::CEILING);
    }
    kern
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[(&[f64], f64, f64)]) -> TrainingSet {
        let mut t = TrainingSet::new();
        for (x, y, v) in points {
            t.push(x.to_vec(), *y, *v).unwrap();
        }
        t
    }

    #[test]
    fn single_point_weight() {
        let t = set(&[(&[0.2], 3.0, 0.5)]);
        let k = Kernel::new(2.0, 0.7).unwrap();
        let gp = fit(&t, &k).unwrap();
        // centered target is 0, so the weight vanishes and the mean is the offset
        assert_eq!(gp.predict(&[0.2]).mean, 3.0);
        let (v, _) = log_evidence(&set(&[(&[0.2], 0.0, 0.5)]), &k).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI * 2.5).ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicates_are_merged() {
        let t = set(&[(&[0.1, 0.1], 1.0, 1.0), (&[0.1, 0.1 + 1e-12], 3.0, 1.0)]);
        assert_eq!(t.len(), 1);
        assert_eq!(t.targets()[0], 2.0);
        assert_eq!(t.noise()[0], 0.5);
    }

    #[test]
    fn interpolation_and_prior_recovery() {
        let t = set(&[(&[-0.5], 1.0, 0.0), (&[0.5], -1.0, 0.0)]);
        let gp = fit(&t, &Kernel::new(1.0, 0.3).unwrap()).unwrap();
        let p = gp.predict(&[-0.5]);
        assert!((p.mean - 1.0).abs() < 1e-8 && p.variance < 1e-8);
        assert!(gp.predict(&[0.0]).mean.abs() < 1e-12);
        let far = gp.predict(&[6.0]);
        assert!(far.mean.abs() < 1e-6 && (far.variance - 1.0).abs() < 1e-6);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let t = set(&[(&[0.1, -0.3], 1.0, 0.01), (&[-0.4, 0.2], -0.5, 0.02), (&[0.6, 0.5], 0.3, 0.0), (&[0.0, 0.9], 2.0, 0.1)]);
        let gp = fit(&t, &Kernel::new(1.3, 0.6).unwrap()).unwrap();
        let x = [0.2, 0.1];
        for beta in [0.0, 2.0] {
            let d = gp.ucb_derivatives(&x, beta);
            let f = |p: &[f64]| {
                let q = gp.predict(p);
                q.mean + beta * q.variance.sqrt()
            };
            assert!((d.value - f(&x)).abs() < 1e-10);
            let h = 1e-5;
            for a in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                assert!((d.gradient[a] - fd).abs() < 1e-6, "grad {a}: {} vs {fd}", d.gradient[a]);
                let gp_ = gp.ucb_derivatives(&xp, beta).gradient;
                let gm_ = gp.ucb_derivatives(&xm, beta).gradient;
                for b in 0..2 {
                    let fd = (gp_[b] - gm_[b]) / (2.0 * h);
                    assert!((d.hessian[(b, a)] - fd).abs() < 1e-5, "hess {b}{a}: {} vs {fd}", d.hessian[(b, a)]);
                }
            }
        }
    }

    #[test]
    fn evidence_gradient_matches_finite_differences() {
        let t = set(&[(&[0.1], 1.0, 0.01), (&[-0.4], -0.5, 0.02), (&[0.6], 0.3, 0.05), (&[0.9], 2.0, 0.1)]);
        let (lg, ll) = (0.4f64, -0.7f64);
        let (_, g) = log_evidence(&t, &Kernel::new(lg.exp(), ll.exp()).unwrap()).unwrap();
        let ev = |a: f64, b: f64| log_evidence(&t, &Kernel::new(a.exp(), b.exp()).unwrap()).unwrap().0;
        let h = 1e-5;
        let fd0 = (ev(lg + h, ll) - ev(lg - h, ll)) / (2.0 * h);
        let fd1 = (ev(lg, ll + h) - ev(lg, ll - h)) / (2.0 * h);
        assert!((g[0] - fd0).abs() < 1e-4 * fd0.abs().max(1e-3));
        assert!((g[1] - fd1).abs() < 1e-4 * fd1.abs().max(1e-3));
    }

    #[test]
    fn constant_targets_drive_amplitude_to_floor() {
        let t = set(&[(&[0.0], 1.0, 0.0), (&[0.5], 1.0, 0.0), (&[-0.5], 1.0, 0.0), (&[0.9], 1.0, 0.0)]);
        let k = optimize_hyperparams(&t, 3, 1);
        assert!(k.amplitude < 1e-6, "{k:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let mut t = TrainingSet::new();
        assert!(t.push(vec![0.0], f64::NAN, 0.0).is_err());
        t.push(vec![0.0], 1.0, 0.0).unwrap();
        assert!(t.push(vec![0.0, 1.0], 1.0, 0.0).is_err());
        assert!(Kernel::new(0.0, 1.0).is_err());
        assert!(fit(&TrainingSet::new(), &Kernel::new(1.0, 1.0).unwrap()).is_err());
    }
}
