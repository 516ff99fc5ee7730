//! `logicfit` command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Fit and design stochastic models against temporal-logic observations.
#[derive(Debug, Parser)]
#[command(name = "logicfit", version)]
struct Cli {
    /// Report errors as JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Size of the trajectory worker pool (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate trajectories and write them as CSV.
    Simulate(SimulateArgs),
    /// Estimate satisfaction probabilities of properties.
    Check(CheckArgs),
    /// Generate synthetic truth-value observations.
    Observe(ObserveArgs),
    /// Estimate parameters from observed truth values (ML, or MAP with --map).
    Identify(IdentifyArgs),
    /// Search parameters matching a target truth distribution.
    Design(DesignArgs),
}

#[derive(Debug, Args)]
struct SimOpts {
    /// Parameter value, `name=value` (repeatable).
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    /// Time horizon; defaults to the temporal depth of the properties.
    #[arg(short = 'T', long)]
    horizon: Option<f64>,
    /// Integration step for SDE and hybrid models.
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Seed; a random one is drawn and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    model: PathBuf,
    #[command(flatten)]
    sim: SimOpts,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Output CSV; with several runs, files get a `_<i>` suffix.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    model: PathBuf,
    props: PathBuf,
    #[command(flatten)]
    sim: SimOpts,
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ObserveArgs {
    model: PathBuf,
    props: PathBuf,
    #[command(flatten)]
    sim: SimOpts,
    /// Number of observations.
    #[arg(short = 'n', long)]
    count: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SearchOpts {
    /// Simulated runs per objective evaluation.
    #[arg(long, default_value_t = 500)]
    runs: u64,
    /// Initial design size.
    #[arg(long, default_value_t = 48)]
    init: usize,
    /// Candidate grid size per iteration.
    #[arg(long, default_value_t = 500)]
    grid: usize,
    /// Initial exploration constant.
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Largest exploration constant reached by doubling on stagnation.
    #[arg(long, default_value_t = 16.0)]
    beta_cap: f64,
    /// Consecutive resamplings without an evaluation before stopping.
    #[arg(long, default_value_t = 3)]
    max_stagnant: usize,
    /// `bootstrap[:B]`, `posterior` or `fixed:<std>`.
    #[arg(long, default_value = "bootstrap")]
    noise: String,
    /// Cap on evaluations after the initial design.
    #[arg(long, default_value_t = 200)]
    max_evaluations: usize,
    /// Result JSON (stdout when absent).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Evaluation trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run manifest JSON (default: next to the result, or `logicfit-manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    model: PathBuf,
    props: PathBuf,
    observations: PathBuf,
    space: PathBuf,
    /// Gamma priors file; switches to MAP estimation.
    #[arg(long)]
    map: Option<PathBuf>,
    #[command(flatten)]
    sim: SimOpts,
    #[command(flatten)]
    search: SearchOpts,
}

#[derive(Debug, Args)]
struct DesignArgs {
    model: PathBuf,
    props: PathBuf,
    target: PathBuf,
    space: PathBuf,
    #[command(flatten)]
    sim: SimOpts,
    #[command(flatten)]
    search: SearchOpts,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json_errors = cli.json_errors;
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.code();
            if json_errors {
                let doc = serde_json::json!({
                    "error": e.kind(),
                    "message": format!("{:#}", e.inner()),
                    "exit_code": code,
                });
                eprintln!("{doc}");
            } else {
                eprintln!("error: {:#}", e.inner());
            }
            ExitCode::from(code)
        }
    }
}
