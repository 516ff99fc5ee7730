//! Trajectory samplers: Gillespie SSA for reaction networks, Euler–Maruyama
//! for SDEs and a grid-resolution hazard scheme for hybrid systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use thiserror::Error;

use crate::model::{
    scope, Bindings, CompiledExpr, ExprError, HybridSystem, Model, ModelError, ReactionNetwork, SdeSystem, Trajectory,
    TrajectoryError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation settings: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("at t = {time}: {source}")]
    Eval { time: f64, source: ExprError },
    #[error("reaction `{reaction}` has propensity {value} at t = {time}")]
    NegativePropensity { reaction: String, value: f64, time: f64 },
    #[error("mode `{mode}` has switching rate {value} at t = {time}")]
    NegativeRate { mode: String, value: f64, time: f64 },
    #[error("more than {0} events before the horizon (explosive parameters?)")]
    Explosion(u64),
    #[error("variable `{variable}` became non-finite at t = {time}")]
    NonFinite { variable: String, time: f64 },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Deterministic random source for one trajectory: a master seed and a
/// stream index. Each index selects an independent ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        RngStream { seed, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    /// Euler step for SDE and hybrid models.
    pub step: f64,
    /// CTMC explosion guard.
    pub max_events: u64,
}

impl SimConfig {
    pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

    pub fn new(horizon: f64, step: f64) -> Result<Self, SimError> {
        let cfg = SimConfig { horizon, step, max_events: Self::DEFAULT_MAX_EVENTS };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.step > 0.0) {
            return Err(SimError::Config(format!("step must be positive, got {}", self.step)));
        }
        if self.step > self.horizon {
            return Err(SimError::Config(format!(
                "step {} exceeds the horizon {}: the grid has no point after t = 0",
                self.step, self.horizon
            )));
        }
        if self.max_events == 0 {
            return Err(SimError::Config("max events must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of Euler steps: grid points `k h` with `k h <= T`.
    fn steps(&self) -> usize {
        (self.horizon / self.step * (1.0 + 1e-12)).floor() as usize
    }
}

/// A model with its parameters bound and expressions compiled, ready to
/// sample many trajectories.
#[derive(Debug, Clone)]
pub enum Prepared {
    Ctmc(PreparedNetwork),
    Sde(PreparedSde),
    Hybrid(PreparedHybrid),
}

impl Prepared {
    pub fn new(model: &Model, values: &Bindings) -> Result<Self, SimError> {
        Ok(match model {
            Model::Ctmc(n) => Prepared::Ctmc(PreparedNetwork::new(n, values)?),
            Model::Sde(s) => Prepared::Sde(PreparedSde::new(s, values, &[])?),
            Model::Hybrid(h) => Prepared::Hybrid(PreparedHybrid::new(h, values)?),
        })
    }

    pub fn names(&self) -> &[String] {
        match self {
            Prepared::Ctmc(n) => &n.names,
            Prepared::Sde(s) => &s.names,
            Prepared::Hybrid(h) => &h.sde.names,
        }
    }

    pub fn simulate(&self, cfg: &SimConfig, stream: RngStream) -> Result<Trajectory, SimError> {
        cfg.validate()?;
        let mut rng = stream.rng();
        match self {
            Prepared::Ctmc(n) => n.run(cfg, &mut rng),
            Prepared::Sde(s) => s.run(cfg, &mut rng),
            Prepared::Hybrid(h) => h.run(cfg, &mut rng),
        }
    }
}

pub fn simulate(model: &Model, values: &Bindings, cfg: &SimConfig, stream: RngStream) -> Result<Trajectory, SimError> {
    Prepared::new(model, values)?.simulate(cfg, stream)
}

pub fn ssa_simulate(
    net: &ReactionNetwork,
    values: &Bindings,
    cfg: &SimConfig,
    stream: RngStream,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    PreparedNetwork::new(net, values)?.run(cfg, &mut stream.rng())
}

pub fn em_simulate(sde: &SdeSystem, values: &Bindings, cfg: &SimConfig, stream: RngStream) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    PreparedSde::new(sde, values, &[])?.run(cfg, &mut stream.rng())
}

pub fn shs_simulate(hs: &HybridSystem, values: &Bindings, cfg: &SimConfig, stream: RngStream) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    PreparedHybrid::new(hs, values)?.run(cfg, &mut stream.rng())
}

fn compile(e: &crate::model::Expr, resolve: &impl Fn(&str) -> Option<crate::model::Binding>) -> Result<CompiledExpr, SimError> {
    e.compile(resolve).map_err(|source| SimError::Eval { time: 0.0, source })
}

fn eval(e: &CompiledExpr, state: &[f64], time: f64) -> Result<f64, SimError> {
    e.eval(state).map_err(|source| SimError::Eval { time, source })
}

#[derive(Debug, Clone)]
pub struct PreparedNetwork {
    names: Vec<String>,
    reaction_names: Vec<String>,
    initial: Vec<f64>,
    /// Per reaction: (species, count) pairs that must be available.
    needs: Vec<Vec<(usize, f64)>>,
    changes: Vec<Vec<(usize, f64)>>,
    rates: Vec<CompiledExpr>,
}

impl PreparedNetwork {
    fn new(net: &ReactionNetwork, values: &Bindings) -> Result<Self, SimError> {
        crate::model::check_bindings(&net.parameters, values)?;
        let names: Vec<String> = net.species.iter().map(|s| s.name.clone()).collect();
        let resolve = scope(&names, &net.constants, values);
        let mut rates = Vec::new();
        let mut needs = Vec::new();
        let mut changes = Vec::new();
        for r in &net.reactions {
            rates.push(compile(&r.rate, &resolve)?);
            needs.push(
                r.reactants.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c as f64)).collect(),
            );
            changes.push(r.change().iter().enumerate().filter(|(_, &c)| c != 0).map(|(i, &c)| (i, c as f64)).collect());
        }
        drop(resolve);
        Ok(PreparedNetwork {
            initial: net.species.iter().map(|s| s.initial as f64).collect(),
            reaction_names: net.reactions.iter().map(|r| r.name.clone()).collect(),
            names,
            needs,
            changes,
            rates,
        })
    }

    fn run(&self, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Trajectory, SimError> {
        let mut x = self.initial.clone();
        let mut times = vec![0.0];
        let mut values = x.clone();
        let mut props = vec![0.0; self.rates.len()];
        let mut t = 0.0;
        let mut events = 0u64;
        loop {
            let mut total = 0.0;
            for (r, a) in props.iter_mut().enumerate() {
                let v = eval(&self.rates[r], &x, t)?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(SimError::NegativePropensity { reaction: self.reaction_names[r].clone(), value: v, time: t });
                }
                // A reaction cannot fire without its reactants, whatever the rate law says.
                let possible = self.needs[r].iter().all(|&(i, c)| x[i] >= c);
                *a = if possible { v } else { 0.0 };
                total += *a;
            }
            if total <= 0.0 {
                break;
            }
            let tau: f64 = rng.sample::<f64, _>(Exp1) / total;
            t += tau;
            if t >= cfg.horizon {
                break;
            }
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = props.len() - 1;
            for (r, &a) in props.iter().enumerate() {
                acc += a;
                if target < acc && a > 0.0 {
                    chosen = r;
                    break;
                }
            }
            // Guard against rounding selecting a disabled last channel.
            while props[chosen] == 0.0 {
                chosen -= 1;
            }
            for &(i, d) in &self.changes[chosen] {
                x[i] += d;
            }
            events += 1;
            if events > cfg.max_events {
                return Err(SimError::Explosion(cfg.max_events));
            }
            times.push(t);
            values.extend_from_slice(&x);
        }
        Ok(Trajectory::from_flat(self.names.clone(), times, values, cfg.horizon)?)
    }
}

#[derive(Debug, Clone)]
pub struct PreparedSde {
    /// Trajectory columns: continuous variables, then any extra (mode) slots.
    names: Vec<String>,
    n: usize,
    initial: Vec<f64>,
    drift: Vec<CompiledExpr>,
    /// Non-zero diffusion entries `(row, channel, expr)`.
    diffusion: Vec<(usize, usize, CompiledExpr)>,
    channels: usize,
}

impl PreparedSde {
    /// `extra` are additional read-only state slots appended after the variables.
    fn new(sde: &SdeSystem, values: &Bindings, extra: &[String]) -> Result<Self, SimError> {
        crate::model::check_bindings(&sde.parameters, values)?;
        let mut names: Vec<String> = sde.variables.iter().map(|v| v.name.clone()).collect();
        names.extend(extra.iter().cloned());
        let resolve = scope(&names, &sde.constants, values);
        let drift = sde.drift.iter().map(|e| compile(e, &resolve)).collect::<Result<_, _>>()?;
        let mut diffusion = Vec::new();
        for (i, row) in sde.diffusion.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if let Some(e) = e {
                    let c = compile(e, &resolve)?;
                    if c.as_constant() != Some(0.0) {
                        diffusion.push((i, j, c));
                    }
                }
            }
        }
        drop(resolve);
        Ok(PreparedSde {
            n: sde.variables.len(),
            initial: sde.variables.iter().map(|v| v.initial).collect(),
            names,
            drift,
            diffusion,
            channels: sde.noise_channels.len(),
        })
    }

    /// One Euler–Maruyama step of the continuous slots of `x` in place.
    fn step(&self, x: &mut [f64], h: f64, t: f64, rng: &mut ChaCha8Rng, incr: &mut [f64], dw: &mut [f64]) -> Result<(), SimError> {
        for (i, f) in self.drift.iter().enumerate() {
            incr[i] = eval(f, x, t)? * h;
        }
        let sq = h.sqrt();
        for w in dw.iter_mut() {
            *w = rng.sample::<f64, _>(StandardNormal) * sq;
        }
        for (i, j, g) in &self.diffusion {
            incr[*i] += eval(g, x, t)? * dw[*j];
        }
        for i in 0..self.n {
            x[i] += incr[i];
            if !x[i].is_finite() {
                return Err(SimError::NonFinite { variable: self.names[i].clone(), time: t + h });
            }
        }
        Ok(())
    }

    fn run(&self, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Trajectory, SimError> {
        let steps = cfg.steps();
        let mut x = self.initial.clone();
        let mut times = Vec::with_capacity(steps + 1);
        let mut values = Vec::with_capacity((steps + 1) * self.n);
        let (mut incr, mut dw) = (vec![0.0; self.n], vec![0.0; self.channels]);
        times.push(0.0);
        values.extend_from_slice(&x);
        for k in 0..steps {
            let t = k as f64 * cfg.step;
            self.step(&mut x, cfg.step, t, rng, &mut incr, &mut dw)?;
            times.push(((k + 1) as f64 * cfg.step).min(cfg.horizon));
            values.extend_from_slice(&x);
        }
        Ok(Trajectory::from_flat(self.names.clone(), times, values, cfg.horizon)?)
    }
}

#[derive(Debug, Clone)]
pub struct PreparedHybrid {
    /// Continuous part compiled over `variables ++ modes`.
    sde: PreparedSde,
    mode_names: Vec<String>,
    initial_modes: Vec<f64>,
    on_to_off: Vec<CompiledExpr>,
    off_to_on: Vec<CompiledExpr>,
}

impl PreparedHybrid {
    fn new(hs: &HybridSystem, values: &Bindings) -> Result<Self, SimError> {
        let mode_names: Vec<String> = hs.modes.iter().map(|m| m.name.clone()).collect();
        let sde = PreparedSde::new(&hs.continuous, values, &mode_names)?;
        let resolve = scope(&sde.names, &hs.continuous.constants, values);
        let on_to_off = hs.modes.iter().map(|m| compile(&m.on_to_off, &resolve)).collect::<Result<_, _>>()?;
        let off_to_on = hs.modes.iter().map(|m| compile(&m.off_to_on, &resolve)).collect::<Result<_, _>>()?;
        drop(resolve);
        Ok(PreparedHybrid {
            initial_modes: hs.modes.iter().map(|m| if m.initially_on { 1.0 } else { 0.0 }).collect(),
            sde,
            mode_names,
            on_to_off,
            off_to_on,
        })
    }

    fn run(&self, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Trajectory, SimError> {
        let n = self.sde.n;
        let m = self.mode_names.len();
        let width = n + m;
        let steps = cfg.steps();
        let h = cfg.step;
        let mut x = self.sde.initial.clone();
        x.extend_from_slice(&self.initial_modes);
        let mut hazard = vec![0.0; m];
        let mut threshold: Vec<f64> = (0..m).map(|_| rng.sample(Exp1)).collect();
        let mut flips = vec![false; m];
        let mut times = Vec::with_capacity(steps + 1);
        let mut values = Vec::with_capacity((steps + 1) * width);
        let (mut incr, mut dw) = (vec![0.0; n], vec![0.0; self.sde.channels]);
        times.push(0.0);
        values.extend_from_slice(&x);
        for k in 0..steps {
            let t = k as f64 * h;
            for j in 0..m {
                let on = x[n + j] != 0.0;
                let e = if on { &self.on_to_off[j] } else { &self.off_to_on[j] };
                let rate = eval(e, &x, t)?;
                if !(rate >= 0.0) || !rate.is_finite() {
                    return Err(SimError::NegativeRate { mode: self.mode_names[j].clone(), value: rate, time: t });
                }
                hazard[j] += rate * h;
                flips[j] = hazard[j] > threshold[j];
                if flips[j] {
                    hazard[j] = 0.0;
                    threshold[j] = rng.sample(Exp1);
                }
            }
            self.sde.step(&mut x, h, t, rng, &mut incr, &mut dw)?;
            for j in 0..m {
                if flips[j] {
                    x[n + j] = 1.0 - x[n + j];
                }
            }
            times.push(((k + 1) as f64 * h).min(cfg.horizon));
            values.extend_from_slice(&x);
        }
        Ok(Trajectory::from_flat(self.sde.names.clone(), times, values, cfg.horizon)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_model;

    fn model(src: &str) -> Model {
        parse_model(src).unwrap()
    }

    fn bind(pairs: &[(&str, f64)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(1.0, 0.1).is_ok());
        assert!(SimConfig::new(0.0, 0.1).is_err());
        assert!(SimConfig::new(1.0, 0.0).is_err());
        assert!(matches!(SimConfig::new(1.0, 2.0), Err(SimError::Config(_))));
    }

    #[test]
    fn empty_network_is_constant() {
        let m = model("ctmc c { species X = 5; }");
        let tr = simulate(&m, &Bindings::new(), &SimConfig::new(3.0, 0.1).unwrap(), RngStream::new(1, 0)).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.state_at(2.9), &[5.0]);
    }

    #[test]
    fn same_stream_same_trajectory() {
        let m = model("ctmc b { species X = 0; param mu; reaction birth: 0 -> X @ mu; reaction death: X -> 0 @ 0.1*X; }");
        let cfg = SimConfig::new(50.0, 0.1).unwrap();
        let v = bind(&[("mu", 2.0)]);
        let a = simulate(&m, &v, &cfg, RngStream::new(9, 3)).unwrap();
        let b = simulate(&m, &v, &cfg, RngStream::new(9, 3)).unwrap();
        let c = simulate(&m, &v, &cfg, RngStream::new(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn populations_stay_non_negative() {
        let m = model("ctmc d { species X = 3; species Y = 0; reaction r: 2*X -> Y @ 5; reaction s: Y -> 0 @ 100; }");
        let cfg = SimConfig::new(10.0, 0.1).unwrap();
        for i in 0..50 {
            let tr = simulate(&m, &Bindings::new(), &cfg, RngStream::new(2, i)).unwrap();
            for k in 0..tr.len() {
                assert!(tr.row(k).iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
            }
        }
    }

    #[test]
    fn explosion_guard_trips() {
        let m = model("ctmc e { species X = 1; reaction r: X -> 2*X @ X; }");
        let mut cfg = SimConfig::new(100.0, 0.1).unwrap();
        cfg.max_events = 1000;
        let e = simulate(&m, &Bindings::new(), &cfg, RngStream::new(0, 0)).unwrap_err();
        assert_eq!(e, SimError::Explosion(1000));
    }

    #[test]
    fn negative_propensity_is_an_error() {
        let m = model("ctmc e { species X = 1; reaction r: 0 -> X @ 0.5 - X; }");
        let e = simulate(&m, &Bindings::new(), &SimConfig::new(100.0, 0.1).unwrap(), RngStream::new(0, 0));
        assert!(matches!(e, Err(SimError::NegativePropensity { .. })));
    }

    #[test]
    fn missing_parameter_is_reported() {
        let m = model("ctmc b { species X = 0; param mu; reaction birth: 0 -> X @ mu; }");
        let e = simulate(&m, &Bindings::new(), &SimConfig::new(1.0, 0.1).unwrap(), RngStream::new(0, 0)).unwrap_err();
        assert_eq!(e, SimError::Model(ModelError::MissingParameter("mu".into())));
    }

    #[test]
    fn deterministic_euler_matches_forward_euler() {
        let m = model("sde d { var X = 1; drift X = -X; }");
        let cfg = SimConfig::new(1.0, 1e-3).unwrap();
        let tr = simulate(&m, &Bindings::new(), &cfg, RngStream::new(0, 0)).unwrap();
        assert_eq!(tr.len(), 1001);
        let mut x = 1.0f64;
        for _ in 0..1000 {
            x += -x * 1e-3;
        }
        let last = tr.row(tr.len() - 1)[0];
        assert!((last - x).abs() < 1e-12);
        assert!((last - (-1.0f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn grid_stops_at_horizon() {
        let m = model("sde d { var X = 1; drift X = 0; }");
        let tr = simulate(&m, &Bindings::new(), &SimConfig::new(1.0, 0.3).unwrap(), RngStream::new(0, 0)).unwrap();
        assert_eq!(tr.times(), &[0.0, 0.3, 0.6, 0.8999999999999999]);
        let tr = simulate(&m, &Bindings::new(), &SimConfig::new(1.0, 1.0).unwrap(), RngStream::new(0, 0)).unwrap();
        assert_eq!(tr.times(), &[0.0, 1.0]);
    }

    #[test]
    fn hybrid_without_jumps_reduces_to_sde() {
        let h = model("hybrid h { var X = 0; mode G = 1; drift X = 2*G - X; noise X = 0.5; rate G on->off = 0; rate G off->on = 0; }");
        let s = model("sde s { var X = 0; drift X = 2 - X; noise X = 0.5; }");
        let cfg = SimConfig::new(5.0, 0.01).unwrap();
        let a = simulate(&h, &Bindings::new(), &cfg, RngStream::new(4, 1)).unwrap();
        let b = simulate(&s, &Bindings::new(), &cfg, RngStream::new(4, 1)).unwrap();
        assert_eq!(a.column("G").unwrap().iter().filter(|&&g| g != 1.0).count(), 0);
        // The hybrid stream draws one exponential threshold first, so compare in distribution only.
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn mode_flip_is_applied_at_end_of_step() {
        let h = model("hybrid h { var X = 0; mode G = 0; drift X = 1; rate G on->off = 0; rate G off->on = 1000; }");
        let tr = simulate(&h, &Bindings::new(), &SimConfig::new(1.0, 0.5).unwrap(), RngStream::new(0, 0)).unwrap();
        // huge rate: flips during the first step, visible from t = h on
        assert_eq!(tr.column("G").unwrap(), vec![0.0, 1.0, 1.0]);
    }
}
