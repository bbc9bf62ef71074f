//! `semibandit run` plays seeded online games and writes regret CSV;
//! `semibandit dispersion` writes worst-ball counts next to their bounds.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semibandit::clustering::ClusteringEnv;
use semibandit::discretized::Regime;
use semibandit::dispersion::{
    clustering_bound, collect_profiles, dispersion_table, fitted_additive_constant, knapsack_bound, log_spaced,
    write_dispersion_csv,
};
use semibandit::experiment::{run, write_results, write_trace, EnvKind, ExperimentConfig, LearnerKind};
use semibandit::knapsack::{KnapsackEnv, SizeModel, DEFAULT_RHO_MAX};
use semibandit::Error;

#[derive(Parser)]
#[command(name = "semibandit", version, about = "Online parameter tuning with semi-bandit feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run learners over (seed, T) cells and write one regret row per cell.
    Run(RunArgs),
    /// Worst-ball discontinuity counts against the dispersion bounds.
    Dispersion(DispersionArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    learner: Option<LearnerKind>,
    #[arg(long)]
    regime: Option<Regime>,
    /// Horizons, e.g. `1000,4000`.
    #[arg(long = "T", value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    /// Seeds as a list `1,2,3` or a range `0..20`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Net granularity for the discretized learner.
    #[arg(long)]
    r: Option<f64>,
    /// Record wall-clock time per round (makes output nondeterministic).
    #[arg(long)]
    timing: bool,
    /// Write every round's point and loss to this CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DispersionEnv {
    Knapsack,
    Clustering,
}

#[derive(Args)]
struct DispersionArgs {
    #[arg(long, value_enum, default_value = "knapsack")]
    env: DispersionEnv,
    /// Items (knapsack) or points (clustering).
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 10.0)]
    kappa: f64,
    /// Knapsack capacity `C`.
    #[arg(long, default_value_t = 10.0)]
    capacity: f64,
    /// Clustering distance bound `B`.
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
    /// `M` of the clustering statement form; defaults to `B`.
    #[arg(long)]
    m: Option<f64>,
    /// Planted classes for clustering.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long = "T", default_value_t = 1000)]
    horizon: usize,
    #[arg(long, value_parser = parse_seeds, default_value = "0..20")]
    seeds: SeedList,
    #[arg(long, default_value_t = 1e-4)]
    eps_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    eps_max: f64,
    #[arg(long, default_value_t = 7)]
    eps_count: usize,
    /// Additive constant `c` in the bounds.
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("range end: {e}"))?;
        if a >= b {
            return Err(format!("empty range {a}..{b}"));
        }
        return Ok(SeedList((a..b).collect()));
    }
    s.split(',')
        .map(|x| x.trim().parse::<u64>().map_err(|e| format!("seed `{x}`: {e}")))
        .collect::<Result<_, _>>()
        .map(SeedList)
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn flag_err(field: &str, message: &str) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn build_config(args: &RunArgs) -> semibandit::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => {
            let env = args.env.ok_or_else(|| flag_err("--env", "required without --config"))?;
            let horizons = args.horizons.clone().ok_or_else(|| flag_err("--T", "required without --config"))?;
            let seeds = args.seeds.clone().ok_or_else(|| flag_err("--seeds", "required without --config"))?;
            ExperimentConfig::new(env, horizons, seeds.0)
        }
    };
    if let Some(env) = args.env {
        config.env = env;
    }
    if let Some(learner) = args.learner {
        config.learner = learner;
    }
    if let Some(regime) = args.regime {
        config.regime = regime;
    }
    if let Some(h) = &args.horizons {
        config.horizons = h.clone();
    }
    if let Some(s) = &args.seeds {
        config.seeds = s.0.clone();
    }
    if args.lambda.is_some() {
        config.lambda = args.lambda;
    }
    if args.r.is_some() {
        config.r = args.r;
    }
    config.timing |= args.timing;
    config.trace |= args.trace.is_some();
    config.validate()?;
    Ok(config)
}

fn cmd_run(args: &RunArgs) -> semibandit::Result<()> {
    let config = build_config(args)?;
    let results = run(&config)?;
    let mut out = output(args.out.as_deref())?;
    write_results(&config, &results, &mut out)?;
    out.flush()?;
    if let Some(path) = &args.trace {
        let mut t = output(Some(path))?;
        write_trace(&results, &mut t)?;
        t.flush()?;
    }
    Ok(())
}

fn cmd_dispersion(args: &DispersionArgs) -> semibandit::Result<()> {
    if !(args.eps_min > 0.0 && args.eps_min <= args.eps_max) || args.eps_count == 0 {
        return Err(flag_err("--eps-min/--eps-max/--eps-count", "need 0 < eps_min <= eps_max and a positive count"));
    }
    let epsilons = log_spaced(args.eps_min, args.eps_max, args.eps_count);
    let (t, n) = (args.horizon as f64, args.n as f64);
    let seeds = &args.seeds.0;
    let (profiles, bounds): (_, Box<dyn Fn(f64) -> (f64, f64)>) = match args.env {
        DispersionEnv::Knapsack => {
            let p = collect_profiles(seeds, args.horizon, |seed| {
                KnapsackEnv::smoothed(args.n, args.capacity, args.kappa, SizeModel::Uniform, seed, DEFAULT_RHO_MAX)
            })?;
            let (kappa, capacity, c) = (args.kappa, args.capacity, args.c);
            let f = move |eps| {
                let b = knapsack_bound(t, eps, n, kappa, capacity, c);
                (b, b)
            };
            (p, Box::new(f))
        }
        DispersionEnv::Clustering => {
            let p = collect_profiles(seeds, args.horizon, |seed| {
                ClusteringEnv::planted(args.n, args.k, args.bound, args.kappa, seed)
            })?;
            let (kappa, bound, m, c) = (args.kappa, args.bound, args.m.unwrap_or(args.bound), args.c);
            let f = move |eps| {
                let b = clustering_bound(t, eps, n, kappa, bound, m, c);
                (b.statement, b.proof)
            };
            (p, Box::new(f))
        }
    };
    let rows = dispersion_table(&profiles, &epsilons, &bounds);
    let leading = |eps: f64| bounds(eps).0 - bounds(0.0).0;
    let fitted = fitted_additive_constant(&rows, t, n, leading);
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "# T={} n={} kappa={} seeds={} c={} fitted_c={fitted}", args.horizon, args.n, args.kappa, seeds.len(), args.c)?;
    write_dispersion_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Dispersion(args) => cmd_dispersion(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
