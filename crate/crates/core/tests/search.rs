mod common;

use logicfit::lang::{parse_formula, parse_model, Formula, Symbols};
use logicfit::model::{Axis, Model, ParameterSpace, Scale};
use logicfit::search::{design, gpucb_maximize, identify, NoiseMode, TaskConfig, UcbConfig};
use logicfit::sim::SimConfig;
use logicfit::smc::{jsd, DesignMatrix, NoisyValue, TargetDistribution};
use proptest::prelude::*;

fn poisson() -> (Model, Vec<Formula>) {
    let m = parse_model("ctmc poisson { species X = 0; param mu; reaction arrival: 0 -> X @ mu; }").unwrap();
    let f = parse_formula("F[0,1] (X > 3)", &Symbols::of(&m)).unwrap();
    (m, vec![f])
}

fn mu_space(lo: f64, hi: f64) -> ParameterSpace {
    ParameterSpace::new(vec![Axis::new("mu", lo, hi, Scale::Linear).unwrap()], vec![]).unwrap()
}

/// 40 observations with `k` true.
fn observations(k: usize) -> DesignMatrix {
    DesignMatrix::new(vec!["above3".into()], (0..40).map(|i| vec![i < k]).collect()).unwrap()
}

fn task(runs: u64, n_init: usize, seed: u64) -> TaskConfig {
    TaskConfig {
        ucb: UcbConfig { n_init, grid: 200, beta_cap: 4.0, seed, ..UcbConfig::default() },
        runs,
        sim: SimConfig::new(1.0, 0.1).unwrap(),
        noise: NoiseMode::Bootstrap(100),
    }
}

#[test]
fn poisson_estimate_is_near_the_analytic_argmax() {
    let (m, f) = poisson();
    // 6 of 40 true: the likelihood peaks at p(mu) = 0.15, mu ~ 2.03
    let target = common::poisson_argmax(6, 40);
    let r = identify(&m, &f, &observations(6), &mu_space(1.0, 3.0), &[], &task(2000, 8, 1)).unwrap();
    assert!((r.best_theta[0] - target).abs() < 0.15, "{} vs {target}", r.best_theta[0]);
    // the surrogate value tracks the exact log-likelihood
    let exact = common::poisson_loglik(r.best_theta[0], 6, 40);
    assert!((r.best.value - exact).abs() < 1.0, "{} vs {exact}", r.best.value);
}

#[test]
fn boundary_optimum_is_flagged_and_stays_in_bounds() {
    let (m, f) = poisson();
    // every observation true: the likelihood increases across the whole box
    let r = identify(&m, &f, &observations(40), &mu_space(1.0, 3.0), &[], &task(500, 6, 2)).unwrap();
    assert!(r.trace.iter().all(|e| (1.0..=3.0).contains(&e.theta[0])));
    assert!(r.best_theta[0] > 2.5, "{}", r.best_theta[0]);
    assert!(r.laplace.on_boundary);
}

#[test]
fn infeasible_target_is_matched_as_closely_as_possible() {
    let (m, _) = poisson();
    let f = vec![Formula::True];
    let target = TargetDistribution::new(vec![0.5, 0.5]).unwrap();
    let runs = 500;
    let r = design(&m, &f, &target, &mu_space(1.0, 3.0), &task(runs, 4, 3)).unwrap();
    // the predictive of an always-true formula after n runs
    let n = runs as f64;
    let q = [1.0 / (n + 2.0), (n + 1.0) / (n + 2.0)];
    assert!((-r.best.value - jsd(&[0.5, 0.5], &q)).abs() < 1e-9);
    assert!((-r.best.value - jsd(&[1.0, 0.0], &[0.5, 0.5])).abs() < 0.01);
    assert!(-r.best.value > 0.05);
}

#[test]
fn mismatched_observations_are_rejected() {
    let (m, f) = poisson();
    let two = DesignMatrix::new(vec!["a".into(), "b".into()], vec![vec![true, false]; 4]).unwrap();
    assert!(identify(&m, &f, &two, &mu_space(1.0, 3.0), &[], &task(10, 4, 0)).is_err());
    let mut cfg = task(10, 4, 0);
    cfg.noise = NoiseMode::Posterior;
    let t = TargetDistribution::new(vec![0.5, 0.5]).unwrap();
    assert!(design(&m, &f, &t, &mu_space(1.0, 3.0), &cfg).is_err());
}

#[test]
fn identify_is_reproducible() {
    let (m, f) = poisson();
    let a = identify(&m, &f, &observations(10), &mu_space(1.0, 3.0), &[], &task(200, 6, 9)).unwrap();
    let b = identify(&m, &f, &observations(10), &mu_space(1.0, 3.0), &[], &task(200, 6, 9)).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.best_theta, b.best_theta);
}

fn box2() -> ParameterSpace {
    ParameterSpace::new(
        vec![Axis::new("a", -2.0, 3.0, Scale::Linear).unwrap(), Axis::new("b", 0.1, 10.0, Scale::Log).unwrap()],
        vec![],
    )
    .unwrap()
}

/// Smooth bump with seeded additive noise.
fn noisy_bump(x: &[f64], seed: u64, level: f64) -> NoisyValue {
    let clean = -(x[0] - 0.7).powi(2) - (x[1].ln() - 0.5).powi(2);
    let u = (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
    NoisyValue { value: clean + level * u, std: level * 0.3 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn search_invariants(seed in any::<u64>(), level in 0.0f64..0.2) {
        let cfg = UcbConfig { n_init: 8, grid: 100, seed, max_evaluations: 40, ..UcbConfig::default() };
        let space = box2();
        let run = || gpucb_maximize(|x, s| Ok(noisy_bump(x, s, level)), &space, &cfg).unwrap();
        let r = run();
        // every evaluated point lies in the box
        for e in &r.trace {
            prop_assert!((-2.0..=3.0).contains(&e.theta[0]) && (0.1..=10.0).contains(&e.theta[1]));
        }
        // running maximum is non-decreasing and ends at the reported best
        let mut best = f64::NEG_INFINITY;
        for w in r.trace.windows(2) {
            prop_assert!(w[0].iteration <= w[1].iteration);
        }
        for e in &r.trace {
            let next = best.max(e.value);
            prop_assert!(next >= best);
            best = next;
        }
        prop_assert_eq!(best, r.best.value);
        prop_assert!(r.extra_evaluations <= 40);
        // same seed, same search
        let again = run();
        prop_assert_eq!(&r.trace, &again.trace);
        prop_assert_eq!(&r.best_theta, &again.best_theta);
    }
}
