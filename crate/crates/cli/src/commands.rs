use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use logicfit::lang::{parse_model, parse_priors, parse_props, parse_space, Formula, Property, Symbols};
use logicfit::model::{Bindings, Model, ParameterSpace};
use logicfit::search::{self, evaluation_seed, NoiseMode, SearchResult, TaskConfig, UcbConfig};
use logicfit::sim::{self, RngStream, SimConfig};
use logicfit::smc::{
    jsd, outcome_label, read_observations, read_target, write_observations, DesignMatrix, DirichletPosterior,
    Sampler,
};
use serde_json::{json, Map, Value};

use crate::manifest::{digest, RunManifest};
use crate::{CheckArgs, Cli, Command, DesignArgs, IdentifyArgs, ObserveArgs, SearchOpts, SimOpts, SimulateArgs};

/// Failure class, mapped to the exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => e,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage(anyhow!("--workers must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Check(a) => check(a),
        Command::Observe(a) => observe(a),
        Command::Identify(a) => identify(a),
        Command::Design(a) => design(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)
}

fn load_model(path: &Path) -> Result<Model> {
    parse_model(&read(path)?).with_context(|| format!("in {}", path.display())).map_err(usage)
}

fn load_props(path: &Path, model: &Model) -> Result<Vec<Property>> {
    let props = parse_props(&read(path)?, &Symbols::of(model))
        .with_context(|| format!("in {}", path.display()))
        .map_err(usage)?;
    if props.is_empty() {
        return Err(usage(anyhow!("{} defines no properties", path.display())));
    }
    Ok(props)
}

fn load_space(path: &Path, model: &Model) -> Result<ParameterSpace> {
    let space = parse_space(&read(path)?).with_context(|| format!("in {}", path.display())).map_err(usage)?;
    let probe = space.bindings(&vec![1.0; space.dim()]);
    model.check_bindings(&probe).with_context(|| format!("search space {}", path.display())).map_err(usage)?;
    Ok(space)
}

fn formulae(props: &[Property]) -> Vec<Formula> {
    props.iter().map(|p| p.formula.clone()).collect()
}

fn parse_set(items: &[String], model: &Model) -> Result<Bindings> {
    let mut b = Bindings::new();
    for item in items {
        let (k, v) = item.split_once('=').ok_or_else(|| usage(anyhow!("`{item}` is not NAME=VALUE")))?;
        let v: f64 = v.trim().parse().map_err(|_| usage(anyhow!("`{v}` is not a number in `{item}`")))?;
        b.insert(k.trim().to_string(), v);
    }
    model.check_bindings(&b).map_err(usage)?;
    Ok(b)
}

fn seed_or_draw(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn horizon(opts: &SimOpts, props: &[Property]) -> Result<f64> {
    let depth = props.iter().map(|p| p.formula.depth()).fold(0.0, f64::max);
    match opts.horizon {
        Some(t) if t < depth => Err(usage(anyhow!("horizon {t} is shorter than the property depth {depth}"))),
        Some(t) => Ok(t),
        None if depth > 0.0 => Ok(depth),
        None => Err(usage(anyhow!("no horizon given (-T) and the properties have no temporal depth"))),
    }
}

fn sim_config(t: f64, step: f64) -> Result<SimConfig> {
    SimConfig::new(t, step).map_err(usage)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display())).map_err(runtime)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn suffixed(path: &Path, i: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{i}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{i}"),
    };
    path.with_file_name(name)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let theta = parse_set(&a.sim.set, &model)?;
    let t = a.sim.horizon.ok_or_else(|| usage(anyhow!("simulate needs a horizon (-T)")))?;
    let cfg = sim_config(t, a.sim.step)?;
    if a.runs == 0 {
        return Err(usage(anyhow!("--runs must be at least 1")));
    }
    if a.runs > 1 && a.out.is_none() {
        return Err(usage(anyhow!("several runs need an output path (-o) to derive file names from")));
    }
    let seed = seed_or_draw(a.sim.seed);
    let prepared = sim::Prepared::new(&model, &theta).map_err(usage)?;
    for i in 0..a.runs {
        let traj = prepared.simulate(&cfg, RngStream::new(seed, i)).map_err(runtime)?;
        let path = match (&a.out, a.runs) {
            (Some(p), 1) => Some(p.clone()),
            (Some(p), _) => Some(suffixed(p, i)),
            (None, _) => None,
        };
        let mut out = open_out(path.as_deref())?;
        traj.write_csv(&mut out).and_then(|_| out.flush()).map_err(runtime)?;
    }
    Ok(())
}

fn sample(model: &Model, props: &[Property], theta: &Bindings, runs: u64, cfg: &SimConfig, seed: u64) -> Result<DirichletPosterior> {
    if runs == 0 {
        return Err(usage(anyhow!("--runs must be at least 1")));
    }
    let sampler = Sampler::new(model, &formulae(props)).map_err(usage)?;
    sampler.sample(theta, runs, cfg, seed).map_err(runtime)
}

/// Marginals, joint counts and predictive probabilities of a posterior.
fn report(props: &[Property], post: &DirichletPosterior) -> Value {
    let d = props.len();
    let n = post.total() as f64;
    let counts = post.counts();
    let q = post.predictive();
    let marginals: Map<String, Value> = props
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let bit = d - 1 - i;
            let k: u64 = counts.iter().enumerate().filter(|(j, _)| (j >> bit) & 1 == 1).map(|(_, c)| c).sum();
            (p.name.clone(), json!(k as f64 / n))
        })
        .collect();
    let joint: Vec<Value> = (0..counts.len())
        .map(|j| json!({"outcome": outcome_label(j, d), "count": counts[j], "predictive": q.probs()[j]}))
        .collect();
    json!({
        "properties": props.iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
        "runs": post.total(),
        "marginals": marginals,
        "joint": joint,
    })
}

fn check(a: CheckArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let props = load_props(&a.props, &model)?;
    let theta = parse_set(&a.sim.set, &model)?;
    let cfg = sim_config(horizon(&a.sim, &props)?, a.sim.step)?;
    let seed = seed_or_draw(a.sim.seed);
    let post = sample(&model, &props, &theta, a.runs, &cfg, seed)?;
    let rep = report(&props, &post);
    let mut out = io::stdout().lock();
    let res = if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&rep).expect("report serializes"))
    } else {
        write_report(&mut out, &props, &rep)
    };
    res.map_err(runtime)
}

fn write_report(out: &mut impl Write, props: &[Property], rep: &Value) -> io::Result<()> {
    writeln!(out, "runs: {}", rep["runs"])?;
    for p in props {
        writeln!(out, "P({}) = {:.4}    {}", p.name, rep["marginals"][&p.name].as_f64().unwrap_or(f64::NAN), p.source)?;
    }
    writeln!(out, "{:<w$}  {:>8}  {:>10}", "outcome", "count", "predictive", w = props.len().max(7))?;
    for row in rep["joint"].as_array().into_iter().flatten() {
        writeln!(
            out,
            "{:<w$}  {:>8}  {:>10.6}",
            row["outcome"].as_str().unwrap_or(""),
            row["count"],
            row["predictive"].as_f64().unwrap_or(f64::NAN),
            w = props.len().max(7)
        )?;
    }
    Ok(())
}

fn observe(a: ObserveArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let props = load_props(&a.props, &model)?;
    let theta = parse_set(&a.sim.set, &model)?;
    let cfg = sim_config(horizon(&a.sim, &props)?, a.sim.step)?;
    if a.count == 0 {
        return Err(usage(anyhow!("the number of observations (-n) must be at least 1")));
    }
    let seed = seed_or_draw(a.sim.seed);
    let sampler = Sampler::new(&model, &formulae(&props)).map_err(usage)?;
    let prepared = sim::Prepared::new(&model, &theta).map_err(usage)?;
    let columns = (0..a.count)
        .map(|i| sampler.run_one(&prepared, &cfg, RngStream::new(seed, i)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(runtime)?;
    let data = DesignMatrix::new(props.iter().map(|p| p.name.clone()).collect(), columns).map_err(runtime)?;
    let mut out = open_out(a.out.as_deref())?;
    write_observations(&data, &mut out).map_err(runtime)?;
    out.flush().map_err(runtime)
}

fn noise_mode(s: &str) -> Result<NoiseMode> {
    let bad = || usage(anyhow!("--noise must be `bootstrap[:B]`, `posterior` or `fixed:<std>`, got `{s}`"));
    match s.split_once(':') {
        None if s == "bootstrap" => Ok(NoiseMode::Bootstrap(200)),
        None if s == "posterior" => Ok(NoiseMode::Posterior),
        Some(("bootstrap", b)) => b.parse().ok().filter(|&b| b >= 2).map(NoiseMode::Bootstrap).ok_or_else(bad),
        Some(("fixed", v)) => v.parse().ok().filter(|v: &f64| *v >= 0.0).map(NoiseMode::Fixed).ok_or_else(bad),
        _ => Err(bad()),
    }
}

fn task_config(opts: &SearchOpts, cfg: SimConfig, seed: u64) -> Result<TaskConfig> {
    let ucb = UcbConfig {
        n_init: opts.init,
        grid: opts.grid,
        beta0: opts.beta,
        beta_cap: opts.beta_cap,
        max_stagnant: opts.max_stagnant,
        max_evaluations: opts.max_evaluations,
        seed,
        ..UcbConfig::default()
    };
    ucb.validate().map_err(usage)?;
    if opts.runs == 0 {
        return Err(usage(anyhow!("--runs must be at least 1")));
    }
    Ok(TaskConfig { ucb, runs: opts.runs, sim: cfg, noise: noise_mode(&opts.noise)? })
}

fn named(names: &[String], values: &[f64]) -> Value {
    Value::Object(names.iter().cloned().zip(values.iter().map(|&v| json!(v))).collect())
}

fn write_trace(path: &Path, r: &SearchResult) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display())).map_err(runtime)?);
    let res = (|| -> io::Result<()> {
        writeln!(w, "iter,{},value,std", r.names.join(","))?;
        for t in &r.trace {
            let theta: Vec<String> = t.theta.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{},{},{}", t.iteration, theta.join(","), t.value, t.std)?;
        }
        w.flush()
    })();
    res.map_err(runtime)
}

struct Outputs {
    result: Option<PathBuf>,
    trace: Option<PathBuf>,
    manifest: PathBuf,
}

fn outputs(opts: &SearchOpts) -> Outputs {
    let manifest = opts.manifest.clone().unwrap_or_else(|| match &opts.out {
        Some(p) => p.with_extension("manifest.json"),
        None => PathBuf::from("logicfit-manifest.json"),
    });
    Outputs { result: opts.out.clone(), trace: opts.trace.clone(), manifest }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    subcommand: &str,
    r: &SearchResult,
    mut doc: Map<String, Value>,
    outs: &Outputs,
    config: Value,
    seed: u64,
    inputs: &[&Path],
    started: Instant,
) -> Result<()> {
    if let Some(t) = &outs.trace {
        write_trace(t, r)?;
    }
    doc.insert("trace_file".into(), json!(outs.trace.as_ref().map(|p| p.display().to_string())));
    doc.insert("manifest".into(), json!(outs.manifest.display().to_string()));
    let mut out = open_out(outs.result.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&Value::Object(doc)).expect("result serializes"))
        .and_then(|_| out.flush())
        .map_err(runtime)?;
    let manifest = RunManifest {
        subcommand: subcommand.into(),
        config,
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        inputs: inputs.iter().map(|p| digest(p)).collect::<anyhow::Result<_>>().map_err(runtime)?,
    };
    manifest.write(&outs.manifest).map_err(runtime)
}

fn result_doc(r: &SearchResult) -> Map<String, Value> {
    let mut doc = Map::new();
    doc.insert("best".into(), named(&r.names, &r.best_theta));
    doc.insert("objective".into(), json!({"value": r.best.value, "std": r.best.std}));
    doc.insert("laplace_std".into(), named(&r.names, &r.laplace.std));
    doc.insert("evaluations".into(), json!(r.evaluations));
    doc.insert("additional_evaluations".into(), json!(r.extra_evaluations));
    doc.insert("failures".into(), json!(r.failures.len()));
    doc.insert("on_boundary".into(), json!(r.laplace.on_boundary));
    doc
}

fn search_config_json(opts: &SearchOpts, cfg: &TaskConfig, extra: Value) -> Value {
    json!({
        "runs": opts.runs,
        "init": opts.init,
        "grid": opts.grid,
        "beta": opts.beta,
        "beta_cap": opts.beta_cap,
        "max_stagnant": opts.max_stagnant,
        "noise": opts.noise,
        "max_evaluations": opts.max_evaluations,
        "horizon": cfg.sim.horizon,
        "step": cfg.sim.step,
        "extra": extra,
    })
}

fn identify(a: IdentifyArgs) -> Result<()> {
    let started = Instant::now();
    let model = load_model(&a.model)?;
    let props = load_props(&a.props, &model)?;
    let space = load_space(&a.space, &model)?;
    let data = read_observations(File::open(&a.observations).with_context(|| format!("opening {}", a.observations.display())).map_err(usage)?)
        .with_context(|| format!("in {}", a.observations.display()))
        .map_err(usage)?;
    let names: Vec<String> = props.iter().map(|p| p.name.clone()).collect();
    if data.names() != names.as_slice() {
        return Err(usage(anyhow!(
            "observation columns [{}] do not match the properties [{}]",
            data.names().join(", "),
            names.join(", ")
        )));
    }
    let priors = match &a.map {
        Some(p) => parse_priors(&read(p)?).with_context(|| format!("in {}", p.display())).map_err(usage)?,
        None => Vec::new(),
    };
    for p in &priors {
        if !space.names().contains(&p.name.as_str()) && !space.fixed.iter().any(|f| f.0 == p.name) {
            return Err(usage(anyhow!("prior on `{}`, which is not in the search space", p.name)));
        }
    }
    let seed = seed_or_draw(a.sim.seed);
    let cfg = task_config(&a.search, sim_config(horizon(&a.sim, &props)?, a.sim.step)?, seed)?;
    let r = search::identify(&model, &formulae(&props), &data, &space, &priors, &cfg).map_err(runtime)?;
    let mut doc = result_doc(&r);
    doc.insert("estimator".into(), json!(if priors.is_empty() { "ml" } else { "map" }));
    let mut inputs = vec![a.model.as_path(), a.props.as_path(), a.observations.as_path(), a.space.as_path()];
    if let Some(p) = &a.map {
        inputs.push(p);
    }
    let config = search_config_json(&a.search, &cfg, json!({"map": a.map.is_some()}));
    finish("identify", &r, doc, &outputs(&a.search), config, seed, &inputs, started)
}

fn design(a: DesignArgs) -> Result<()> {
    let started = Instant::now();
    let model = load_model(&a.model)?;
    let props = load_props(&a.props, &model)?;
    let space = load_space(&a.space, &model)?;
    let target = read_target(
        File::open(&a.target).with_context(|| format!("opening {}", a.target.display())).map_err(usage)?,
        props.len(),
        1e-6,
    )
    .with_context(|| format!("in {}", a.target.display()))
    .map_err(usage)?;
    let seed = seed_or_draw(a.sim.seed);
    let cfg = task_config(&a.search, sim_config(horizon(&a.sim, &props)?, a.sim.step)?, seed)?;
    let f = formulae(&props);
    let r = search::design(&model, &f, &target, &space, &cfg).map_err(runtime)?;
    // Fresh estimate of the achieved distribution at the optimum.
    let sampler = Sampler::new(&model, &f).map_err(runtime)?;
    let post = sampler
        .sample(&space.bindings(&r.best_theta), cfg.runs, &cfg.sim, evaluation_seed(seed, u64::MAX))
        .map_err(runtime)?;
    let q = post.predictive();
    let d = props.len();
    let table: Vec<Value> = (0..q.probs().len())
        .map(|j| json!({"outcome": outcome_label(j, d), "target": target.probs()[j], "achieved": q.probs()[j]}))
        .collect();
    let mut doc = result_doc(&r);
    doc.insert("jsd".into(), json!(-r.best.value));
    doc.insert("jsd_check".into(), json!(jsd(target.probs(), q.probs())));
    doc.insert("probabilities".into(), Value::Array(table));
    let inputs = [a.model.as_path(), a.props.as_path(), a.target.as_path(), a.space.as_path()];
    let config = search_config_json(&a.search, &cfg, Value::Null);
    finish("design", &r, doc, &outputs(&a.search), config, seed, &inputs, started)
}
