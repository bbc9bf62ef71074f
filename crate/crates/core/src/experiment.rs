//! Seeded regret experiments: configuration, the exact best fixed parameter
//! in hindsight, and CSV output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::clustering::{read_labels, ClusteringEnv, DistanceMatrix};
use crate::discretized::{build_rnet, recommended_params, DiscreteExp3, Regime};
use crate::error::{Error, Result};
use crate::exp3::{recommended_lambda, Exp3Set, Learner};
use crate::knapsack::{KnapsackEnv, KnapsackInstance, SizeModel, DEFAULT_RHO_MAX};
use crate::param::{FeedbackObservation, ParamSpace1D, PiecewiseConstant, SemiBanditEnvironment};
use crate::rng::{learner_rng, round_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Knapsack,
    Clustering,
    Synthetic,
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knapsack" => Ok(EnvKind::Knapsack),
            "clustering" => Ok(EnvKind::Clustering),
            "synthetic" => Ok(EnvKind::Synthetic),
            other => Err(config_err("env", format!("unknown environment `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    /// Exp3-SET on the continuous interval.
    Continuous,
    /// Exp3-SET on an r-net.
    Discretized,
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(LearnerKind::Continuous),
            "discretized" => Ok(LearnerKind::Discretized),
            other => Err(config_err("learner", format!("unknown learner `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnapsackParams {
    pub n: usize,
    pub capacity: f64,
    pub kappa: f64,
    pub rho_max: f64,
    /// Fixed item sizes; uniform on `[1, C]` when absent.
    pub sizes: Option<Vec<f64>>,
    /// Replay this instance every round instead of sampling.
    pub instance_file: Option<PathBuf>,
}

impl Default for KnapsackParams {
    fn default() -> Self {
        Self {
            n: 10,
            capacity: 10.0,
            kappa: 10.0,
            rho_max: DEFAULT_RHO_MAX,
            sizes: None,
            instance_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringParams {
    pub n: usize,
    /// Clusters in the target partition and in the pruning.
    pub k: usize,
    /// Distances lie in `[0, bound]`.
    pub bound: f64,
    pub kappa: f64,
    pub distance_file: Option<PathBuf>,
    pub labels_file: Option<PathBuf>,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        Self {
            n: 12,
            k: 3,
            bound: 1.0,
            kappa: 1.25,
            distance_file: None,
            labels_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    /// Cells per round.
    pub cells: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self { cells: 8 }
    }
}

fn default_learner() -> LearnerKind {
    LearnerKind::Continuous
}

fn default_regime() -> Regime {
    Regime::SemiBandit
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    #[serde(default = "default_learner")]
    pub learner: LearnerKind,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    #[serde(rename = "T", alias = "horizons")]
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub lambda: Option<f64>,
    /// Net granularity for the discretized learner.
    pub r: Option<f64>,
    /// Measure wall-clock time per round; off keeps output byte-identical.
    #[serde(default)]
    pub timing: bool,
    /// Keep every round's point and loss.
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub knapsack: KnapsackParams,
    #[serde(default)]
    pub clustering: ClusteringParams,
    #[serde(default)]
    pub synthetic: SyntheticParams,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn new(env: EnvKind, horizons: Vec<usize>, seeds: Vec<u64>) -> Self {
        Self {
            env,
            learner: default_learner(),
            regime: default_regime(),
            horizons,
            seeds,
            lambda: None,
            r: None,
            timing: false,
            trace: false,
            knapsack: KnapsackParams::default(),
            clustering: ClusteringParams::default(),
            synthetic: SyntheticParams::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().map_or_else(|| "<file>".to_string(), |s| {
                let line = text[..s.start].matches('\n').count() + 1;
                format!("line {line}")
            });
            config_err(&field, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML file; instance paths are taken relative to it.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for file in [
            &mut config.knapsack.instance_file,
            &mut config.clustering.distance_file,
            &mut config.clustering.labels_file,
        ]
        .into_iter()
        .flatten()
        {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(config_err("T", "give at least one horizon"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "give at least one seed"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(config_err("seeds", "seeds must be distinct"));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(config_err("lambda", format!("must lie in [0, 1], got {l}")));
            }
        }
        if let Some(r) = self.r {
            if !(r > 0.0) {
                return Err(config_err("r", format!("must be positive, got {r}")));
            }
        }
        if self.learner == LearnerKind::Continuous && self.regime == Regime::Bandit {
            return Err(config_err(
                "regime",
                "the continuous learner needs feedback sets; use learner = \"discretized\" for bandit feedback",
            ));
        }
        if self.env == EnvKind::Synthetic && self.synthetic.cells == 0 {
            return Err(config_err("synthetic.cells", "need at least one cell"));
        }
        Ok(())
    }

    /// The environment for one seed; every learner given this seed sees the
    /// same instances.
    pub fn build_env(&self, seed: u64) -> Result<Box<dyn SemiBanditEnvironment + Send>> {
        let wrap = |field: &str, e: Error| match e {
            e @ (Error::Parse { .. } | Error::Io(_)) => e,
            other => config_err(field, other.to_string()),
        };
        Ok(match self.env {
            EnvKind::Knapsack => {
                let p = &self.knapsack;
                let env = match &p.instance_file {
                    Some(path) => {
                        let inst = KnapsackInstance::from_path(path).map_err(|e| wrap("knapsack.instance_file", e))?;
                        KnapsackEnv::fixed(vec![inst], p.rho_max)
                    }
                    None => {
                        let sizes = p.sizes.clone().map_or(SizeModel::Uniform, SizeModel::Fixed);
                        KnapsackEnv::smoothed(p.n, p.capacity, p.kappa, sizes, seed, p.rho_max)
                    }
                }
                .map_err(|e| wrap("knapsack", e))?;
                Box::new(env)
            }
            EnvKind::Clustering => {
                let p = &self.clustering;
                let env = match (&p.distance_file, &p.labels_file) {
                    (Some(dpath), Some(lpath)) => {
                        let d = DistanceMatrix::from_path(dpath, None).map_err(|e| wrap("clustering.distance_file", e))?;
                        let file = std::fs::File::open(lpath)?;
                        let labels = read_labels(std::io::BufReader::new(file))?;
                        ClusteringEnv::fixed(d, labels, p.k)
                    }
                    (None, None) => ClusteringEnv::planted(p.n, p.k, p.bound, p.kappa, seed),
                    _ => {
                        return Err(config_err(
                            "clustering",
                            "distance_file and labels_file must be given together",
                        ))
                    }
                }
                .map_err(|e| wrap("clustering", e))?;
                Box::new(env)
            }
            EnvKind::Synthetic => Box::new(SyntheticEnv::new(self.synthetic.cells, seed)?),
        })
    }
}

/// Random piecewise-constant losses on `[0, 1]`: `cells − 1` uniform
/// breakpoints per round, and on each cell `0.5·u + 0.5·|mid − 0.3|` with
/// `u` uniform, so parameters near 0.3 are better on average.
#[derive(Clone, Debug)]
pub struct SyntheticEnv {
    cells: usize,
    seed: u64,
    cached: Option<(usize, PiecewiseConstant)>,
}

impl SyntheticEnv {
    pub fn new(cells: usize, seed: u64) -> Result<Self> {
        if cells == 0 {
            return Err(config_err("synthetic.cells", "need at least one cell"));
        }
        Ok(Self {
            cells,
            seed,
            cached: None,
        })
    }

    fn loss(&mut self, round: usize) -> &PiecewiseConstant {
        if self.cached.as_ref().map(|c| c.0) != Some(round) {
            let mut rng = round_rng(self.seed, round);
            let mut breaks: Vec<f64> = (0..self.cells - 1).map(|_| rng.random::<f64>()).collect();
            breaks.sort_unstable_by(f64::total_cmp);
            breaks.dedup();
            breaks.retain(|&b| b > 0.0);
            let mut values = Vec::with_capacity(breaks.len() + 1);
            let mut lo = 0.0;
            for i in 0..=breaks.len() {
                let hi = breaks.get(i).copied().unwrap_or(1.0);
                let mid = 0.5 * (lo + hi);
                values.push(0.5 * rng.random::<f64>() + 0.5 * (mid - 0.3).abs());
                lo = hi;
            }
            let f = PiecewiseConstant::new(ParamSpace1D::unit(), breaks, values).expect("sorted breakpoints inside (0, 1)");
            self.cached = Some((round, f));
        }
        &self.cached.as_ref().expect("just filled").1
    }
}

impl SemiBanditEnvironment for SyntheticEnv {
    fn space(&self) -> ParamSpace1D {
        ParamSpace1D::unit()
    }

    fn loss_bound(&self) -> f64 {
        1.0
    }

    fn step(&mut self, rho: f64, round: usize) -> Result<FeedbackObservation> {
        Ok(self.loss(round).observe(rho))
    }

    fn round_loss(&mut self, round: usize) -> Result<Option<PiecewiseConstant>> {
        Ok(Some(self.loss(round).clone()))
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// The fixed parameter minimizing the total loss, and that total. Sweeps the
/// merged breakpoints of all rounds, then re-evaluates the best cells exactly
/// at their midpoints.
pub fn best_in_hindsight(space: ParamSpace1D, losses: &[PiecewiseConstant]) -> Result<(f64, f64)> {
    if losses.is_empty() {
        return Ok((0.5 * (space.lo + space.hi), 0.0));
    }
    if let Some(f) = losses.iter().find(|f| f.space() != space) {
        return Err(crate::error::invalid(
            "losses",
            format!("loss on [{}, {}] in a game on [{}, {}]", f.space().lo, f.space().hi, space.lo, space.hi),
        ));
    }
    let mut events: Vec<(f64, f64)> = Vec::new();
    let mut current = Compensated::default();
    for f in losses {
        current.add(f.values()[0]);
        let v = f.values();
        events.extend(f.breaks().iter().enumerate().map(|(i, &b)| (b, v[i + 1] - v[i])));
    }
    events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    // (lo, hi, approximate total) per merged cell.
    let mut cells: Vec<(f64, f64, f64)> = Vec::with_capacity(events.len() + 1);
    let mut lo = space.lo;
    let mut i = 0;
    while i < events.len() {
        let at = events[i].0;
        cells.push((lo, at, current.value()));
        while i < events.len() && events[i].0 == at {
            current.add(events[i].1);
            i += 1;
        }
        lo = at;
    }
    cells.push((lo, space.hi, current.value()));
    let approx_min = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let tolerance = 1e-9 * (losses.len() as f64).max(1.0);
    let mut candidates: Vec<&(f64, f64, f64)> = cells.iter().filter(|c| c.2 <= approx_min + tolerance).collect();
    candidates.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.total_cmp(&b.0)));
    candidates.truncate(64);
    let mut best = (f64::NAN, f64::INFINITY);
    for &&(lo, hi, _) in &candidates {
        let mid = 0.5 * (lo + hi);
        let mut total = Compensated::default();
        for f in losses {
            total.add(f.eval(mid));
        }
        let total = total.value();
        if total < best.1 || (total == best.1 && mid < best.0) {
            best = (mid, total);
        }
    }
    Ok(best)
}

/// The best point of a 10⁵-point grid, for environments that cannot reveal
/// whole losses. Evaluates every round at every grid point.
pub fn best_on_grid<E>(env: &mut E, horizon: usize) -> Result<(f64, f64)>
where
    E: SemiBanditEnvironment + ?Sized,
{
    let space = env.space();
    let points = 100_000;
    let mut best = (f64::NAN, f64::INFINITY);
    for g in 0..=points {
        let rho = space.lo + space.width() * g as f64 / points as f64;
        let mut total = 0.0;
        for t in 0..horizon {
            total += env.step(rho, t)?.loss_at_play;
        }
        if total < best.1 {
            best = (rho, total);
        }
    }
    Ok(best)
}

/// One row of the output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegretRecord {
    pub seed: u64,
    pub horizon: usize,
    pub learner_loss: f64,
    pub opt_loss: f64,
    pub regret: f64,
    pub us_per_round: f64,
}

/// The settings a cell actually ran with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSettings {
    pub lambda: f64,
    /// Net granularity, discretized learner only.
    pub r: Option<f64>,
    /// Most feedback cells in any round.
    pub max_cells: usize,
    /// Whether the best-in-hindsight loss came from exact cell boundaries.
    pub exact_opt: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub seed: u64,
    pub horizon: usize,
    pub round: usize,
    pub rho: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub record: RegretRecord,
    pub settings: CellSettings,
    pub trace: Vec<TraceRow>,
}

/// Step size and granularity for a cell, honouring overrides.
pub fn cell_settings(config: &ExperimentConfig, space: ParamSpace1D, horizon: usize, max_cells: usize) -> Result<(f64, Option<f64>)> {
    let m = max_cells.max(1);
    match config.learner {
        LearnerKind::Continuous => {
            let lambda = match config.lambda {
                Some(l) => l,
                None => {
                    let cells = if config.regime == Regime::FullInfo { 1 } else { m };
                    let r = (1.0 / (horizon as f64).sqrt()).min(0.5 * space.radius());
                    recommended_lambda(1, space.radius(), r, horizon, cells)?
                }
            };
            Ok((lambda, None))
        }
        LearnerKind::Discretized => {
            let (r, lambda) = recommended_params(config.regime, 1, space.radius(), 1.0, horizon, m)?;
            let r = config.r.unwrap_or(r).min(space.radius());
            Ok((config.lambda.unwrap_or(lambda), Some(r)))
        }
    }
}

/// Plays one learner against `env` for `horizon` rounds with the learner's
/// randomness drawn from `seed`. `losses` are the rounds' complete losses,
/// needed for full information. Returns the cumulative loss, the per-round
/// trace if asked, and the elapsed seconds.
pub fn play_learner(
    config: &ExperimentConfig,
    env: &mut (dyn SemiBanditEnvironment + Send),
    losses: Option<&[PiecewiseConstant]>,
    seed: u64,
    horizon: usize,
    lambda: f64,
    r: Option<f64>,
) -> Result<(f64, Vec<(f64, f64)>, f64)> {
    let space = env.space();
    let mut rng = learner_rng(seed);
    let mut trace = Vec::with_capacity(if config.trace { horizon } else { 0 });
    let mut total = 0.0;
    let start = Instant::now();
    match (config.learner, config.regime) {
        (LearnerKind::Continuous, Regime::FullInfo) => {
            let losses = losses.ok_or_else(|| Error::Unsupported("full information needs whole losses".into()))?;
            let mut learner: Exp3Set = Exp3Set::new(space, lambda)?;
            for (t, f) in losses.iter().enumerate().take(horizon) {
                let rho = learner.sample(&mut rng);
                let loss = env.step(rho, t)?.loss_at_play;
                learner.observe_full(loss, f)?;
                total += loss;
                if config.trace {
                    trace.push((rho, loss));
                }
            }
        }
        (LearnerKind::Continuous, _) => {
            let mut learner: Exp3Set = Exp3Set::new(space, lambda)?;
            for t in 0..horizon {
                let (rho, loss) = learner.play_round(env, t, &mut rng)?;
                total += loss;
                if config.trace {
                    trace.push((rho, loss));
                }
            }
        }
        (LearnerKind::Discretized, regime) => {
            let net = build_rnet(space, r.expect("discretized learners have a granularity"), 1)?;
            let mut learner: DiscreteExp3 = DiscreteExp3::new(net, regime, lambda)?;
            for t in 0..horizon {
                let (rho, loss) = learner.play_round(env, t, &mut rng)?;
                total += loss;
                if config.trace {
                    trace.push((rho, loss));
                }
            }
        }
    }
    Ok((total, trace, start.elapsed().as_secs_f64()))
}

/// One (seed, T) cell.
pub fn run_cell(config: &ExperimentConfig, seed: u64, horizon: usize) -> Result<CellResult> {
    let mut env = config.build_env(seed)?;
    let space = env.space();
    if horizon == 0 {
        return Ok(CellResult {
            record: RegretRecord {
                seed,
                horizon,
                learner_loss: 0.0,
                opt_loss: 0.0,
                regret: 0.0,
                us_per_round: 0.0,
            },
            settings: CellSettings {
                lambda: config.lambda.unwrap_or(0.0),
                r: config.r,
                max_cells: 0,
                exact_opt: true,
            },
            trace: Vec::new(),
        });
    }
    let losses = (0..horizon)
        .map(|t| env.round_loss(t))
        .collect::<Result<Option<Vec<_>>>>()?;
    let max_cells = losses
        .as_ref()
        .map_or(1, |ls| ls.iter().map(PiecewiseConstant::cell_count).max().unwrap_or(1));
    let (lambda, r) = cell_settings(config, space, horizon, max_cells)?;
    let (learner_loss, trace, seconds) =
        play_learner(config, env.as_mut(), losses.as_deref(), seed, horizon, lambda, r)?;
    let (opt_loss, exact_opt) = match &losses {
        Some(ls) => (best_in_hindsight(space, ls)?.1, true),
        None => (best_on_grid(env.as_mut(), horizon)?.1, false),
    };
    Ok(CellResult {
        record: RegretRecord {
            seed,
            horizon,
            learner_loss,
            opt_loss,
            regret: learner_loss - opt_loss,
            us_per_round: if config.timing { seconds * 1e6 / horizon as f64 } else { 0.0 },
        },
        settings: CellSettings {
            lambda,
            r,
            max_cells,
            exact_opt,
        },
        trace: trace
            .into_iter()
            .enumerate()
            .map(|(round, (rho, loss))| TraceRow {
                seed,
                horizon,
                round,
                rho,
                loss,
            })
            .collect(),
    })
}

/// All cells, in parallel, sorted by (seed, T).
pub fn run(config: &ExperimentConfig) -> Result<Vec<CellResult>> {
    config.validate()?;
    let cells: Vec<(u64, usize)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.horizons.iter().map(move |&t| (s, t)))
        .collect();
    let mut results = cells
        .par_iter()
        .map(|&(seed, t)| run_cell(config, seed, t))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|c| (c.record.seed, c.record.horizon));
    Ok(results)
}

pub const CSV_HEADER: [&str; 6] = ["seed", "T", "learner_loss", "opt_loss", "regret", "us_per_round"];

/// `# ...` lines with each cell's settings, then the records.
pub fn write_results<W: Write>(config: &ExperimentConfig, results: &[CellResult], mut out: W) -> Result<()> {
    writeln!(
        out,
        "# env={:?} learner={:?} regime={}",
        config.env, config.learner, config.regime
    )?;
    for c in results {
        let s = &c.settings;
        write!(
            out,
            "# seed={} T={} lambda={} M={}",
            c.record.seed, c.record.horizon, s.lambda, s.max_cells
        )?;
        if let Some(r) = s.r {
            write!(out, " r={r}")?;
        }
        if !s.exact_opt {
            write!(out, " opt=grid")?;
        }
        writeln!(out)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for c in results {
        let r = &c.record;
        w.write_record([
            r.seed.to_string(),
            r.horizon.to_string(),
            r.learner_loss.to_string(),
            r.opt_loss.to_string(),
            r.regret.to_string(),
            r.us_per_round.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `seed,T,round,rho,loss`.
pub fn write_trace<W: Write>(results: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "T", "round", "rho", "loss"])?;
    for row in results.iter().flat_map(|c| &c.trace) {
        w.write_record([
            row.seed.to_string(),
            row.horizon.to_string(),
            row.round.to_string(),
            row.rho.to_string(),
            row.loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knapsack::full_information_loss;
    use crate::rng::seeded;

    #[test]
    fn best_of_one_round() {
        let space = ParamSpace1D::unit();
        let f = PiecewiseConstant::new(space, vec![0.2, 0.7], vec![0.5, 0.1, 0.9]).unwrap();
        let (rho, total) = best_in_hindsight(space, &[f]).unwrap();
        assert!(rho > 0.2 && rho < 0.7);
        assert_eq!(total, 0.1);
    }

    #[test]
    fn swapping_rounds_tie() {
        let space = ParamSpace1D::unit();
        let a = PiecewiseConstant::new(space, vec![0.5], vec![0.0, 1.0]).unwrap();
        let b = PiecewiseConstant::new(space, vec![0.5], vec![1.0, 0.0]).unwrap();
        assert_eq!(best_in_hindsight(space, &[a, b]).unwrap().1, 1.0);
    }

    #[test]
    fn matches_grid_on_knapsack_rounds() {
        let mut rng = seeded(61);
        let mut losses = Vec::new();
        for _ in 0..100 {
            let inst = crate::knapsack::sample_smoothed_instance(6, 10.0, 10.0, &SizeModel::Uniform, &mut rng).unwrap();
            losses.push(full_information_loss(&inst, 10.0).unwrap());
        }
        let space = ParamSpace1D::new(0.0, 10.0).unwrap();
        let (rho, total) = best_in_hindsight(space, &losses).unwrap();
        let direct: f64 = losses.iter().map(|f| f.eval(rho)).sum();
        assert!((direct - total).abs() < 1e-12);
        let grid = (0..=100_000)
            .map(|g| {
                let x = 10.0 * g as f64 / 100_000.0;
                losses.iter().map(|f| f.eval(x)).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(total <= grid + 1e-9);
        assert!(grid - total < 1.0 + 1e-9, "grid {grid} vs exact {total}");
    }

    const CONFIG: &str = r#"
env = "knapsack"
T = [0, 50, 200]
seeds = [3, 1]

[knapsack]
n = 6
kappa = 5.0
"#;

    #[test]
    fn config_parses_and_validates() {
        let c = ExperimentConfig::from_toml_str(CONFIG).unwrap();
        assert_eq!(c.horizons, vec![0, 50, 200]);
        assert_eq!(c.knapsack.n, 6);
        assert_eq!(c.knapsack.capacity, 10.0);
        assert_eq!(c.regime, Regime::SemiBandit);
        match ExperimentConfig::from_toml_str("env = \"knapsack\"\nT = [1]\nseeds = [1, 1]\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "seeds"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::from_toml_str("env = \"knapsack\"\nT = [1]\nseeds = [1]\nbogus = 2\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "line 4"),
            other => panic!("{other:?}"),
        }
        let bandit = "env = \"synthetic\"\nT = [1]\nseeds = [1]\nregime = \"bandit\"\n";
        assert!(ExperimentConfig::from_toml_str(bandit).is_err());
    }

    #[test]
    fn run_is_deterministic_with_zero_horizon_rows() {
        let c = ExperimentConfig::from_toml_str(CONFIG).unwrap();
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_results(&c, &a, &mut x).unwrap();
        write_results(&c, &b, &mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.len(), 6);
        assert_eq!((a[0].record.seed, a[0].record.horizon), (1, 0));
        assert_eq!(a[0].record.regret, 0.0);
        for cell in &a {
            let r = &cell.record;
            assert!((r.regret - (r.learner_loss - r.opt_loss)).abs() < 1e-12);
            assert!(r.regret >= 0.0, "{r:?}");
        }
        let text = String::from_utf8(x).unwrap();
        assert!(text.lines().any(|l| l == "seed,T,learner_loss,opt_loss,regret,us_per_round"));
    }

    #[test]
    fn default_lambda_uses_observed_cells() {
        let c = ExperimentConfig::from_toml_str(CONFIG).unwrap();
        let cell = run_cell(&c, 1, 200).unwrap();
        let m = cell.settings.max_cells;
        assert!(m > 1);
        let expected = recommended_lambda(1, 5.0, 1.0 / 200f64.sqrt(), 200, m).unwrap();
        assert_eq!(cell.settings.lambda, expected);
    }

    #[test]
    fn every_learner_and_environment_runs() {
        for env in [EnvKind::Knapsack, EnvKind::Clustering, EnvKind::Synthetic] {
            for (learner, regime) in [
                (LearnerKind::Continuous, Regime::SemiBandit),
                (LearnerKind::Continuous, Regime::FullInfo),
                (LearnerKind::Discretized, Regime::FullInfo),
                (LearnerKind::Discretized, Regime::SemiBandit),
                (LearnerKind::Discretized, Regime::Bandit),
            ] {
                let mut c = ExperimentConfig::new(env, vec![40], vec![7]);
                c.learner = learner;
                c.regime = regime;
                c.clustering.n = 8;
                c.trace = true;
                let out = run(&c).unwrap();
                assert_eq!(out[0].trace.len(), 40);
                let r = out[0].record;
                assert!(r.learner_loss >= 0.0 && r.learner_loss <= 40.0, "{env:?} {learner:?} {regime:?}");
                assert!(r.opt_loss <= r.learner_loss + 40.0);
            }
        }
    }

    #[test]
    fn learners_share_the_instance_stream() {
        let mut c = ExperimentConfig::new(EnvKind::Synthetic, vec![30], vec![5]);
        c.trace = true;
        let a = run_cell(&c, 5, 30).unwrap();
        c.learner = LearnerKind::Discretized;
        c.regime = Regime::Bandit;
        let b = run_cell(&c, 5, 30).unwrap();
        assert_eq!(a.record.opt_loss, b.record.opt_loss);
    }
}
