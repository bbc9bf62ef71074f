//! Empirical dispersion: how many rounds have a discontinuity in the worst
//! ball of radius `ε`, next to the closed-form bounds for the knapsack and
//! clustering families. Also Monte Carlo checks of the density-transform
//! lemmas those bounds rest on.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::param::SemiBanditEnvironment;

/// Sorted discontinuity locations of each round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscontinuityProfile {
    rounds: Vec<Vec<f64>>,
}

impl DiscontinuityProfile {
    pub fn new(mut rounds: Vec<Vec<f64>>) -> Self {
        for r in &mut rounds {
            r.sort_unstable_by(f64::total_cmp);
        }
        Self { rounds }
    }

    pub fn rounds(&self) -> &[Vec<f64>] {
        &self.rounds
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    /// Most discontinuities in any one round.
    pub fn k_max(&self) -> usize {
        self.rounds.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// The first `t` rounds.
    pub fn truncated(&self, t: usize) -> Self {
        Self {
            rounds: self.rounds[..t.min(self.rounds.len())].to_vec(),
        }
    }
}

/// `max_ρ` of the number of distinct rounds with a discontinuity in
/// `[ρ − ε, ρ + ε]`, by a sliding window over all locations.
pub fn worst_ball_count(profile: &DiscontinuityProfile, epsilon: f64) -> usize {
    let mut points: Vec<(f64, usize)> = profile
        .rounds
        .iter()
        .enumerate()
        .flat_map(|(t, xs)| xs.iter().map(move |&x| (x, t)))
        .collect();
    points.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut in_window = vec![0usize; profile.rounds.len()];
    let mut distinct = 0;
    let mut best = 0;
    let mut start = 0;
    for end in 0..points.len() {
        let t = points[end].1;
        if in_window[t] == 0 {
            distinct += 1;
        }
        in_window[t] += 1;
        while points[end].0 - points[start].0 > 2.0 * epsilon {
            let s = points[start].1;
            in_window[s] -= 1;
            if in_window[s] == 0 {
                distinct -= 1;
            }
            start += 1;
        }
        best = best.max(distinct);
    }
    best
}

/// The cell boundaries of every round's complete loss.
pub fn collect_discontinuities<E>(env: &mut E, horizon: usize) -> Result<DiscontinuityProfile>
where
    E: SemiBanditEnvironment + ?Sized,
{
    let rounds = (0..horizon)
        .map(|t| {
            env.round_loss(t)?
                .map(|f| f.breaks().to_vec())
                .ok_or_else(|| Error::Unsupported("environment does not reveal whole losses".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscontinuityProfile::new(rounds))
}

/// One profile per seed, seeds in parallel; `make_env(seed)` builds each
/// seed's environment.
pub fn collect_profiles<E, F>(seeds: &[u64], horizon: usize, make_env: F) -> Result<Vec<DiscontinuityProfile>>
where
    E: SemiBanditEnvironment,
    F: Fn(u64) -> Result<E> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| collect_discontinuities(&mut make_env(seed)?, horizon))
        .collect()
}

/// `√(T ln(T n))`, the shared additive term.
fn additive(t: f64, n: f64) -> f64 {
    if t * n > 1.0 {
        (t * (t * n).ln()).sqrt()
    } else {
        0.0
    }
}

/// `T ε n² κ² ln C + c √(T ln(T n))`.
pub fn knapsack_bound(t: f64, epsilon: f64, n: f64, kappa: f64, capacity: f64, c: f64) -> f64 {
    t * epsilon * n * n * kappa * kappa * capacity.ln() + c * additive(t, n)
}

/// The two readings of the clustering bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusteringBound {
    /// `32 T ε n⁸ κ² M² + c √(T ln(T n))`.
    pub statement: f64,
    /// `32 T ε (κ B)² n⁸ + c √(T ln(T n))`.
    pub proof: f64,
}

pub fn clustering_bound(t: f64, epsilon: f64, n: f64, kappa: f64, bound: f64, m: f64, c: f64) -> ClusteringBound {
    let tuples = n.powi(8);
    let extra = c * additive(t, n);
    ClusteringBound {
        statement: 32.0 * t * epsilon * tuples * kappa * kappa * m * m + extra,
        proof: 32.0 * t * epsilon * (kappa * bound).powi(2) * tuples + extra,
    }
}

/// One `ε` of a dispersion experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersionRow {
    pub epsilon: f64,
    pub empirical_mean: f64,
    pub empirical_stderr: f64,
    pub bound_statement: f64,
    pub bound_proof: f64,
}

/// Seed-averaged worst-ball counts; `bounds(ε)` gives (statement, proof).
pub fn dispersion_table<F>(profiles: &[DiscontinuityProfile], epsilons: &[f64], bounds: F) -> Vec<DispersionRow>
where
    F: Fn(f64) -> (f64, f64),
{
    epsilons
        .iter()
        .map(|&eps| {
            let counts: Vec<f64> = profiles.iter().map(|p| worst_ball_count(p, eps) as f64).collect();
            let (mean, stderr) = mean_stderr(&counts);
            let (statement, proof) = bounds(eps);
            DispersionRow {
                epsilon: eps,
                empirical_mean: mean,
                empirical_stderr: stderr,
                bound_statement: statement,
                bound_proof: proof,
            }
        })
        .collect()
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Smallest `c` with `mean ≤ leading(ε) + c √(T ln(T n))` on every row.
pub fn fitted_additive_constant<F>(rows: &[DispersionRow], t: f64, n: f64, leading: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let scale = additive(t, n);
    rows.iter()
        .map(|r| ((r.empirical_mean - leading(r.epsilon)) / scale).max(0.0))
        .fold(0.0, f64::max)
}

/// `epsilon,empirical_mean,empirical_stderr,bound_statement,bound_proof`.
pub fn write_dispersion_csv<W: Write>(rows: &[DispersionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "empirical_mean", "empirical_stderr", "bound_statement", "bound_proof"])?;
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.empirical_mean.to_string(),
            r.empirical_stderr.to_string(),
            r.bound_statement.to_string(),
            r.bound_proof.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `n` points log-spaced from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Result of one density-transform lemma.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformCheck {
    pub lemma: &'static str,
    pub bound: f64,
    pub max_density: f64,
    /// `bound · (1 + 3/√count)` for the fullest bin.
    pub threshold: f64,
    pub passed: bool,
}

/// Largest histogram density over `[q01, q99]` with 200 bins, and the count in
/// that bin.
fn max_bin_density(mut xs: Vec<f64>) -> (f64, usize) {
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    let lo = xs[n / 100];
    let hi = xs[n - 1 - n / 100];
    let bins = 200;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &xs {
        if x >= lo && x <= hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let fullest = *counts.iter().max().expect("200 bins");
    (fullest as f64 / (n as f64 * width), fullest)
}

fn check(lemma: &'static str, bound: f64, xs: Vec<f64>) -> TransformCheck {
    let (max_density, count) = max_bin_density(xs);
    let threshold = bound * (1.0 + 3.0 / (count.max(1) as f64).sqrt());
    TransformCheck {
        lemma,
        bound,
        max_density,
        threshold,
        passed: max_density <= threshold,
    }
}

/// Monte Carlo checks, each variable uniform with density exactly `κ`:
/// sum (`κ`), ratio with `|Y| ≤ M` (`κM²`), `X/(X+Y)` (`4κ²M²`) and
/// `(X+Y)/(Z+Y)` (`4κ²M²`).
pub fn validate_density_transforms<R: Rng + ?Sized>(
    kappa: f64,
    m: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<TransformCheck>> {
    if !kappa.is_finite() || !m.is_finite() || !(kappa > 0.0) || !(m > 0.0) {
        return Err(invalid("kappa, M", "must be positive and finite"));
    }
    if kappa * m < 1.0 {
        return Err(invalid("kappa", "a density bounded by kappa needs support of width 1/kappa <= M"));
    }
    if samples < 100_000 {
        return Err(invalid("samples", "need at least 1e5 samples"));
    }
    let w = 1.0 / kappa;
    let mut u = |width: f64| rng.random::<f64>() * width;
    let sum: Vec<f64> = (0..samples).map(|_| u(w) + u(w)).collect();
    // Joint density of (X, Y) is κ with X on [0, 1/(κM)] and Y on [0, M].
    let ratio: Vec<f64> = (0..samples)
        .map(|_| {
            let x = u(1.0 / (kappa * m));
            let y = m - u(m);
            x / y
        })
        .collect();
    let share: Vec<f64> = (0..samples)
        .map(|_| {
            let (x, y) = (w - u(w), w - u(w));
            x / (x + y)
        })
        .collect();
    let cross: Vec<f64> = (0..samples)
        .map(|_| {
            let (x, y, z) = (u(w), w - u(w), w - u(w));
            (x + y) / (z + y)
        })
        .collect();
    let km = kappa * m;
    Ok(vec![
        check("sum", kappa, sum),
        check("ratio", kappa * m * m, ratio),
        check("x_over_sum", 4.0 * km * km, share),
        check("shared_ratio", 4.0 * km * km, cross),
    ])
}
