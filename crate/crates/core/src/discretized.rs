//! Exp3-SET over a finite r-net of the parameter space.
//!
//! Arm `i` owns the bin `[i, i + 1)` of a weight backend over `[0, N]`, so
//! sampling and range updates cost `O(log N)` with the tree backend.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exp3::Learner;
use crate::interval_tree::{WeightBackend, WeightTree};
use crate::param::{ParamInterval, ParamSpace1D, SemiBanditEnvironment, SetLoss};

/// What the learner sees after playing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// The whole loss function.
    FullInfo,
    /// The loss on the piece containing the played point.
    SemiBandit,
    /// The loss at the played point only.
    Bandit,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_info" | "full" => Ok(Regime::FullInfo),
            "semi_bandit" | "semi" => Ok(Regime::SemiBandit),
            "bandit" => Ok(Regime::Bandit),
            other => Err(invalid("regime", format!("unknown regime `{other}`"))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::FullInfo => "full_info",
            Regime::SemiBandit => "semi_bandit",
            Regime::Bandit => "bandit",
        })
    }
}

/// A finite cover of `[lo, hi]^d` by balls of radius `r`.
///
/// Points are stored flat, `d` coordinates each, in lexicographic order; for
/// `d = 1` they are increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct RNet {
    space: ParamSpace1D,
    dim: usize,
    r: f64,
    coords: Vec<f64>,
}

/// Grid coordinates `lo + spacing/2 + k·spacing` covering `[lo, hi]`.
fn axis_points(space: ParamSpace1D, spacing: f64) -> Vec<f64> {
    let n = ((space.width() / spacing) - 1e-9).ceil().max(1.0) as usize;
    (0..n)
        .map(|k| (space.lo + (k as f64 + 0.5) * spacing).min(space.hi))
        .collect()
}

/// Builds the net. For `d = 1` the points are `lo + r, lo + 3r, …` clipped to
/// the space; for `d ≥ 2` an axis grid with spacing `2r/√d`.
pub fn build_rnet(space: ParamSpace1D, r: f64, d: usize) -> Result<RNet> {
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    if !(r > 0.0) || r > space.radius() {
        return Err(invalid(
            "r",
            format!("need 0 < r <= R = {}, got {r}", space.radius()),
        ));
    }
    let spacing = 2.0 * r / (d as f64).sqrt();
    let axis = axis_points(space, spacing);
    let total = axis
        .len()
        .checked_pow(d as u32)
        .filter(|&n| n <= 50_000_000)
        .ok_or_else(|| invalid("r", "net too large"))?;
    let mut coords = Vec::with_capacity(total * d);
    let mut index = vec![0usize; d];
    for _ in 0..total {
        coords.extend(index.iter().map(|&k| axis[k]));
        for slot in index.iter_mut().rev() {
            *slot += 1;
            if *slot < axis.len() {
                break;
            }
            *slot = 0;
        }
    }
    Ok(RNet {
        space,
        dim: d,
        r,
        coords,
    })
}

impl RNet {
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn space(&self) -> ParamSpace1D {
        self.space
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// The points of a one-dimensional net.
    pub fn points_1d(&self) -> Option<&[f64]> {
        (self.dim == 1).then_some(&self.coords[..])
    }

    /// `(3R/r)^d`.
    pub fn size_bound(&self) -> f64 {
        (3.0 * self.space.radius() / self.r).powi(self.dim as i32)
    }

    /// Euclidean distance from `x` to the nearest net point.
    pub fn covering_distance(&self, x: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| {
                self.point(i)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Indices of the 1-D net points inside `set`.
    pub fn arms_in(&self, set: &ParamInterval) -> Range<usize> {
        let points = &self.coords[..];
        let start = points.partition_point(|&p| p < set.lo || (p == set.lo && !set.lo_closed));
        let end = points.partition_point(|&p| p < set.hi || (p == set.hi && set.hi_closed));
        start..end.max(start)
    }
}

/// `(r, λ)` from the discretized regret theorem. `cells` is the bound `M` on
/// pieces per round and only enters the semi-bandit step size.
pub fn recommended_params(
    regime: Regime,
    d: usize,
    radius: f64,
    lipschitz: f64,
    horizon: usize,
    cells: usize,
) -> Result<(f64, f64)> {
    if horizon == 0 || d == 0 || cells == 0 {
        return Err(invalid("T, d, M", "must all be at least 1"));
    }
    if !(lipschitz > 0.0) || !(radius > 0.0) {
        return Err(invalid("L, R", "must be positive"));
    }
    let t = horizon as f64;
    let df = d as f64;
    let (r, numerator, denominator) = match regime {
        Regime::FullInfo => {
            let r = 1.0 / (lipschitz * t.sqrt());
            (r, (radius * lipschitz * t.sqrt()).ln(), t)
        }
        Regime::SemiBandit => {
            let r = 1.0 / (lipschitz * t.sqrt());
            (r, df * (radius * lipschitz * t.sqrt()).ln(), cells as f64 * t)
        }
        Regime::Bandit => {
            let r = t.powf(-1.0 / (df + 2.0));
            let numerator = df * (3.0 * radius * t.powf(1.0 / (df + 2.0))).ln();
            let denominator = (3.0 * radius).powf(df) * t.powf(2.0 * (df + 1.0) / (df + 2.0));
            (r, numerator, denominator)
        }
    };
    let lambda = if numerator > 0.0 {
        (numerator / denominator).sqrt().min(1.0)
    } else {
        1.0
    };
    Ok((r, lambda))
}

/// One round's outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteStep {
    pub arm: usize,
    pub loss: f64,
    /// Probability mass of the observed arms.
    pub q: f64,
}

#[derive(Clone, Debug)]
pub struct DiscreteExp3<B = WeightTree> {
    net: RNet,
    regime: Regime,
    lambda: f64,
    weights: B,
    round: usize,
}

impl<B: WeightBackend> DiscreteExp3<B> {
    pub fn new(net: RNet, regime: Regime, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid("lambda", format!("step size must lie in [0, 1], got {lambda}")));
        }
        if net.dim() > 1 && regime != Regime::Bandit {
            return Err(Error::Unsupported(
                "only bandit feedback is available for d >= 2".into(),
            ));
        }
        let weights = B::new_uniform(ParamInterval::closed(0.0, net.len() as f64)?)?;
        Ok(Self {
            net,
            regime,
            lambda,
            weights,
            round: 0,
        })
    }

    pub fn net(&self) -> &RNet {
        &self.net
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn round(&self) -> usize {
        self.round
    }

    fn bins(&self, arms: &Range<usize>) -> Result<ParamInterval> {
        ParamInterval::cell(arms.start as f64, arms.end as f64, self.net.len() as f64)
    }

    pub fn sample_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let x = self.weights.draw(rng);
        (x.floor() as usize).min(self.net.len() - 1)
    }

    pub fn probability(&self, arm: usize) -> f64 {
        self.range_probability(&(arm..arm + 1))
    }

    fn range_probability(&self, arms: &Range<usize>) -> f64 {
        if arms.is_empty() {
            return 0.0;
        }
        let set = self.bins(arms).expect("arm range inside the net");
        let mass = self.weights.integrate(&set).expect("arm range inside the net");
        mass / self.weights.total()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.net.len()).map(|i| self.probability(i)).collect()
    }

    /// Applies `w_i ← w_i·exp(−λ ℓ_i / q)` to every observed arm, where the
    /// runs list the observed arms with their (shared) losses. Returns `q`.
    pub fn update(&mut self, runs: &[(Range<usize>, f64)]) -> Result<f64> {
        for (arms, loss) in runs {
            if arms.end > self.net.len() || arms.is_empty() {
                return Err(invalid("arms", format!("bad arm range {arms:?}")));
            }
            if !(0.0..=1.0).contains(loss) {
                return Err(Error::LossOutOfRange(*loss));
            }
        }
        let q = match self.regime {
            Regime::FullInfo => 1.0,
            _ => runs.iter().map(|(arms, _)| self.range_probability(arms)).sum(),
        };
        if !(q > 0.0) {
            return Err(invalid("q", "observed arms carry no probability"));
        }
        for (arms, loss) in runs {
            let exponent = self.lambda * loss / q;
            if exponent > 0.0 {
                let set = self.bins(arms)?;
                self.weights.update(&set, (-exponent).exp().max(f64::MIN_POSITIVE))?;
            }
        }
        self.round += 1;
        Ok(q)
    }

    /// A bandit round on a net of any dimension.
    pub fn step_bandit<R, F>(&mut self, rng: &mut R, loss_at: F) -> Result<DiscreteStep>
    where
        R: Rng + ?Sized,
        F: FnOnce(&[f64]) -> f64,
    {
        let arm = self.sample_arm(rng);
        let loss = loss_at(self.net.point(arm));
        let q = self.update(&[(arm..arm + 1, loss)])?;
        Ok(DiscreteStep { arm, loss, q })
    }

    /// A round against a one-dimensional environment in this learner's regime.
    pub fn step<E, R>(&mut self, env: &mut E, round: usize, rng: &mut R) -> Result<DiscreteStep>
    where
        E: SemiBanditEnvironment + ?Sized,
        R: Rng + ?Sized,
    {
        let points = self
            .net
            .points_1d()
            .ok_or_else(|| Error::Unsupported("environments are one-dimensional".into()))?;
        let arm = self.sample_arm(rng);
        let rho = points[arm];
        let feedback = env.step(rho, round)?;
        let loss = feedback.loss_at_play;
        let runs = match self.regime {
            Regime::Bandit => vec![(arm..arm + 1, loss)],
            Regime::SemiBandit => {
                let arms = self.net.arms_in(&feedback.set);
                if !arms.contains(&arm) {
                    return Err(Error::PointNotInSet {
                        rho,
                        lo: feedback.set.lo,
                        hi: feedback.set.hi,
                    });
                }
                match &feedback.loss {
                    SetLoss::Constant(l) => vec![(arms, *l)],
                    f => arms.map(|i| (i..i + 1, f.eval(points[i]))).collect(),
                }
            }
            Regime::FullInfo => {
                let full = env.round_loss(round)?.ok_or_else(|| {
                    Error::Unsupported("full information needs an environment that reveals whole losses".into())
                })?;
                full.cells()
                    .map(|(cell, l)| (self.net.arms_in(&cell), l))
                    .filter(|(arms, _)| !arms.is_empty())
                    .collect()
            }
        };
        let q = self.update(&runs)?;
        Ok(DiscreteStep { arm, loss, q })
    }
}

impl<B: WeightBackend> Learner for DiscreteExp3<B> {
    fn play_round<E, R>(&mut self, env: &mut E, round: usize, rng: &mut R) -> Result<(f64, f64)>
    where
        E: SemiBanditEnvironment + ?Sized,
        R: Rng + ?Sized,
    {
        let step = self.step(env, round, rng)?;
        Ok((self.net.point(step.arm)[0], step.loss))
    }
}
