//! Continuous Exp3-SET.
//!
//! The learner keeps a positive weight function `w_t` over the parameter
//! space, plays `ρ_t ~ w_t / W_t`, observes the feedback set `A` containing
//! `ρ_t`, and multiplies the weights on `A` by `exp(−λ ℓ / p_t(A))`. The
//! estimate is zero off `A`, so nothing else changes. There is no explicit
//! exploration mixing.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::interval_tree::{WeightBackend, WeightTree};
use crate::param::{FeedbackObservation, ParamInterval, ParamSpace1D, PiecewiseConstant, SemiBanditEnvironment};

/// The importance-weighted loss estimate of one round: `value` on `set`,
/// zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatedLoss {
    pub set: ParamInterval,
    pub value: f64,
    /// `p_t(set)` used in the estimate.
    pub probability: f64,
}

impl EstimatedLoss {
    pub fn at(&self, rho: f64) -> f64 {
        if self.set.contains(rho) {
            self.value
        } else {
            0.0
        }
    }
}

/// `ℓ / p(A)` on `A`, with `p(A)` integrated exactly from the weights.
pub fn estimate_loss<B: WeightBackend>(
    weights: &B,
    set: &ParamInterval,
    loss: f64,
) -> Result<EstimatedLoss> {
    let mass = weights.integrate(set)?;
    let probability = mass / weights.total();
    if !(probability > 0.0) {
        return Err(Error::ZeroProbability {
            lo: set.lo,
            hi: set.hi,
        });
    }
    Ok(EstimatedLoss {
        set: *set,
        value: loss / probability,
        probability,
    })
}

/// `λ = sqrt(d ln(R/r) / (T M))`, clamped to `(0, 1]`.
pub fn recommended_lambda(d: usize, radius: f64, r: f64, horizon: usize, cells: usize) -> Result<f64> {
    if d == 0 || horizon == 0 || cells == 0 {
        return Err(invalid("d, T, M", "must all be at least 1"));
    }
    if !(r > 0.0) || r >= radius {
        return Err(invalid("r", format!("need 0 < r < R, got r = {r}, R = {radius}")));
    }
    let lambda = (d as f64 * (radius / r).ln() / (horizon as f64 * cells as f64)).sqrt();
    Ok(lambda.min(1.0))
}

#[derive(Clone, Debug)]
pub struct Exp3Set<B = WeightTree> {
    weights: B,
    lambda: f64,
    round: usize,
    space: ParamSpace1D,
    cumulative_loss: f64,
}

impl<B: WeightBackend> Exp3Set<B> {
    pub fn new(space: ParamSpace1D, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid("lambda", format!("step size must lie in [0, 1], got {lambda}")));
        }
        Ok(Self {
            weights: B::new_uniform(space.interval())?,
            lambda,
            round: 0,
            space,
            cumulative_loss: 0.0,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.weights.draw(rng)
    }

    /// `p_t(set)`.
    pub fn probability(&self, set: &ParamInterval) -> Result<f64> {
        Ok(self.weights.integrate(set)? / self.weights.total())
    }

    pub fn observe(&mut self, played: f64, feedback: &FeedbackObservation) -> Result<EstimatedLoss> {
        let set = feedback.set;
        if !set.contains(played) {
            return Err(Error::PointNotInSet {
                rho: played,
                lo: set.lo,
                hi: set.hi,
            });
        }
        if set.is_degenerate() {
            return Err(Error::InvalidInterval {
                lo: set.lo,
                hi: set.hi,
                reason: "feedback sets must have positive width",
            });
        }
        let loss = feedback.loss.as_constant().ok_or_else(|| {
            Error::Unsupported("the 1-D learner needs losses that are constant on each feedback set".into())
        })?;
        for l in [loss, feedback.loss_at_play] {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::LossOutOfRange(l));
            }
        }
        let estimate = estimate_loss(&self.weights, &set, loss)?;
        let exponent = self.lambda * estimate.value;
        if exponent > 0.0 {
            // exp underflows to zero past ~745; the weights stay positive.
            let factor = (-exponent).exp().max(f64::MIN_POSITIVE);
            self.weights.update(&set, factor)?;
        }
        self.round += 1;
        self.cumulative_loss += feedback.loss_at_play;
        Ok(estimate)
    }

    /// Full information: every cell of the round's loss is scaled by
    /// `exp(−λ ℓ)`, with no importance weighting.
    pub fn observe_full(&mut self, loss_at_play: f64, loss: &PiecewiseConstant) -> Result<()> {
        for (cell, l) in loss.cells() {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::LossOutOfRange(l));
            }
            if l > 0.0 && !cell.is_degenerate() {
                self.weights.update(&cell, (-self.lambda * l).exp().max(f64::MIN_POSITIVE))?;
            }
        }
        self.round += 1;
        self.cumulative_loss += loss_at_play;
        Ok(())
    }

    pub fn weights(&self) -> &B {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn space(&self) -> ParamSpace1D {
        self.space
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.cumulative_loss
    }
}

/// One round of an online game: choose a point, query the environment, learn.
pub trait Learner {
    /// Returns the played point and its loss.
    fn play_round<E, R>(&mut self, env: &mut E, round: usize, rng: &mut R) -> Result<(f64, f64)>
    where
        E: SemiBanditEnvironment + ?Sized,
        R: Rng + ?Sized;
}

impl<B: WeightBackend> Learner for Exp3Set<B> {
    fn play_round<E, R>(&mut self, env: &mut E, round: usize, rng: &mut R) -> Result<(f64, f64)>
    where
        E: SemiBanditEnvironment + ?Sized,
        R: Rng + ?Sized,
    {
        let rho = self.sample(rng);
        let feedback = env.step(rho, round)?;
        self.observe(rho, &feedback)?;
        Ok((rho, feedback.loss_at_play))
    }
}

/// Restarts Exp3-SET on epochs of length 1, 2, 4, … with the step size
/// chosen for each epoch's length, so no horizon is needed up front.
pub struct DoublingExp3<F> {
    space: ParamSpace1D,
    lambda_for: F,
    epoch_len: usize,
    epoch_start: usize,
    inner: Exp3Set<WeightTree>,
}

impl<F: Fn(usize) -> f64> DoublingExp3<F> {
    pub fn new(space: ParamSpace1D, lambda_for: F) -> Result<Self> {
        let inner = Exp3Set::new(space, lambda_for(1))?;
        Ok(Self {
            space,
            lambda_for,
            epoch_len: 1,
            epoch_start: 0,
            inner,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.inner.lambda()
    }
}

impl<F: Fn(usize) -> f64> Learner for DoublingExp3<F> {
    fn play_round<E, R>(&mut self, env: &mut E, round: usize, rng: &mut R) -> Result<(f64, f64)>
    where
        E: SemiBanditEnvironment + ?Sized,
        R: Rng + ?Sized,
    {
        if round >= self.epoch_start + self.epoch_len {
            self.epoch_start = round;
            self.epoch_len *= 2;
            self.inner = Exp3Set::new(self.space, (self.lambda_for)(self.epoch_len))?;
        }
        self.inner.play_round(env, round, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundRecord {
    pub rho: f64,
    pub loss: f64,
    pub cumulative: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub rounds: Vec<RoundRecord>,
}

impl Trajectory {
    pub fn total_loss(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cumulative)
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

/// Plays `horizon` rounds of any learner against an environment.
pub fn play_game<L, E, R>(learner: &mut L, env: &mut E, horizon: usize, rng: &mut R) -> Result<Trajectory>
where
    L: Learner,
    E: SemiBanditEnvironment + ?Sized,
    R: Rng + ?Sized,
{
    let mut rounds = Vec::with_capacity(horizon);
    let mut cumulative = 0.0;
    for t in 0..horizon {
        let (rho, loss) = learner.play_round(env, t, rng)?;
        cumulative += loss;
        rounds.push(RoundRecord {
            rho,
            loss,
            cumulative,
        });
    }
    Ok(Trajectory { rounds })
}

/// Continuous Exp3-SET with step size `lambda` on an environment whose losses
/// already lie in `[0, 1]`.
pub fn run_game<E, R>(env: &mut E, horizon: usize, lambda: f64, rng: &mut R) -> Result<Trajectory>
where
    E: SemiBanditEnvironment + ?Sized,
    R: Rng + ?Sized,
{
    let mut learner: Exp3Set = Exp3Set::new(env.space(), lambda)?;
    play_game(&mut learner, env, horizon, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_tree::NaiveWeights;
    use crate::rng::seeded;

    fn ho(a: f64, b: f64) -> ParamInterval {
        ParamInterval::half_open(a, b).unwrap()
    }

    /// Random partition of [0, 1] with random losses, fresh every round.
    struct RandomCells {
        seed: u64,
        cells: usize,
    }

    impl RandomCells {
        fn loss(&self, round: usize) -> PiecewiseConstant {
            let mut rng = crate::rng::round_rng(self.seed, round);
            let mut breaks: Vec<f64> = (0..self.cells - 1).map(|_| rng.random::<f64>()).collect();
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.dedup();
            let values = (0..=breaks.len()).map(|_| rng.random::<f64>()).collect();
            PiecewiseConstant::new(ParamSpace1D::unit(), breaks, values).unwrap()
        }
    }

    impl SemiBanditEnvironment for RandomCells {
        fn space(&self) -> ParamSpace1D {
            ParamSpace1D::unit()
        }
        fn loss_bound(&self) -> f64 {
            1.0
        }
        fn step(&mut self, rho: f64, round: usize) -> Result<FeedbackObservation> {
            Ok(self.loss(round).observe(rho))
        }
    }

    struct Constant(f64);
    impl SemiBanditEnvironment for Constant {
        fn space(&self) -> ParamSpace1D {
            ParamSpace1D::unit()
        }
        fn loss_bound(&self) -> f64 {
            1.0
        }
        fn step(&mut self, _rho: f64, _round: usize) -> Result<FeedbackObservation> {
            Ok(FeedbackObservation::constant(ParamInterval::closed(0.0, 1.0)?, self.0))
        }
    }

    #[test]
    fn observe_example_hand_arithmetic() {
        let mut l: Exp3Set = Exp3Set::new(ParamSpace1D::unit(), 0.1).unwrap();
        let est = l
            .observe(0.1, &FeedbackObservation::constant(ho(0.0, 0.25), 1.0))
            .unwrap();
        assert!((est.probability - 0.25).abs() < 1e-15);
        assert!((est.value - 4.0).abs() < 1e-14);
        let expected = 0.25 * (-0.4f64).exp() + 0.75;
        assert!((l.weights().total() - expected).abs() < 1e-15);
        assert_eq!(l.round(), 1);
    }

    #[test]
    fn halving_mass_gives_one_third() {
        // λ ℓ̂ = ln 2 on [0, 0.5): the left half keeps mass 0.25 of 0.75.
        let lambda = 2f64.ln() / 2.0;
        let mut l: Exp3Set = Exp3Set::new(ParamSpace1D::unit(), lambda).unwrap();
        l.observe(0.2, &FeedbackObservation::constant(ho(0.0, 0.5), 1.0)).unwrap();
        let p = l.probability(&ho(0.0, 0.5)).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-14);
        let mut rng = seeded(3);
        let hits = (0..100_000).filter(|_| l.sample(&mut rng) < 0.5).count() as f64 / 1e5;
        assert!((hits - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn zero_loss_and_full_information_rounds() {
        let mut l: Exp3Set = Exp3Set::new(ParamSpace1D::unit(), 0.5).unwrap();
        l.observe(0.3, &FeedbackObservation::constant(ho(0.2, 0.6), 0.0)).unwrap();
        assert_eq!(l.weights().piece_count(), 1);
        assert_eq!(l.weights().total(), 1.0);

        let full = FeedbackObservation::constant(ParamInterval::closed(0.0, 1.0).unwrap(), 0.5);
        let est = l.observe(0.3, &full).unwrap();
        assert_eq!(est.value, 0.5);
        assert!((l.probability(&ho(0.0, 0.3)).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn observe_rejects_bad_feedback() {
        let mut l: Exp3Set = Exp3Set::new(ParamSpace1D::unit(), 0.5).unwrap();
        let fb = FeedbackObservation::constant(ho(0.2, 0.6), 0.5);
        assert!(matches!(l.observe(0.7, &fb), Err(Error::PointNotInSet { .. })));
        let fb = FeedbackObservation::constant(ho(0.2, 0.6), 1.5);
        assert!(matches!(l.observe(0.3, &fb), Err(Error::LossOutOfRange(_))));
        let fb = FeedbackObservation::constant(ParamInterval::closed(0.3, 0.3).unwrap(), 0.5);
        assert!(l.observe(0.3, &fb).is_err());
        assert!(Exp3Set::<WeightTree>::new(ParamSpace1D::unit(), 1.5).is_err());
    }

    #[test]
    fn recommended_lambda_examples() {
        let e = std::f64::consts::E;
        assert!((recommended_lambda(1, e, 1.0, 100, 4).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(recommended_lambda(1, e, 1.0, 1, 1).unwrap(), 1.0);
        let got = recommended_lambda(2, e * e, 1.0, 800, 1).unwrap();
        assert!((got - (4.0f64 / 800.0).sqrt()).abs() < 1e-15);
        assert!((got - 0.0707).abs() < 1e-4);
        assert!(recommended_lambda(1, 1.0, 1.0, 10, 1).is_err());
        assert!(recommended_lambda(1, 1.0, 2.0, 10, 1).is_err());
    }

    #[test]
    fn games_are_deterministic() {
        let mut env = RandomCells { seed: 4, cells: 6 };
        assert!(run_game(&mut env, 0, 0.1, &mut seeded(1)).unwrap().is_empty());
        let a = run_game(&mut env, 300, 0.1, &mut seeded(9)).unwrap();
        let b = run_game(&mut env, 300, 0.1, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        let c = run_game(&mut Constant(0.5), 1000, 0.3, &mut seeded(2)).unwrap();
        assert_eq!(c.total_loss(), 500.0);
    }

    #[test]
    fn tree_and_flat_backends_agree() {
        let mut env = RandomCells { seed: 21, cells: 8 };
        let mut tree: Exp3Set<WeightTree> = Exp3Set::new(ParamSpace1D::unit(), 0.05).unwrap();
        let mut flat: Exp3Set<NaiveWeights> = Exp3Set::new(ParamSpace1D::unit(), 0.05).unwrap();
        let a = play_game(&mut tree, &mut env, 400, &mut seeded(77)).unwrap();
        let b = play_game(&mut flat, &mut env, 400, &mut seeded(77)).unwrap();
        // The two backends sum masses in different orders, so sampled points
        // drift apart by rounding only.
        for (t, (x, y)) in a.rounds.iter().zip(&b.rounds).enumerate() {
            assert!((x.rho - y.rho).abs() <= 1e-8, "round {t}: {} vs {}", x.rho, y.rho);
        }
        assert!((a.total_loss() - b.total_loss()).abs() <= 1e-6);
    }

    #[test]
    fn estimator_is_unbiased_over_the_partition() {
        let mut rng = seeded(8);
        for trial in 0..100 {
            let mut l: Exp3Set = Exp3Set::new(ParamSpace1D::unit(), 0.3).unwrap();
            let env = RandomCells { seed: trial, cells: 5 };
            for round in 0..20 {
                let rho = l.sample(&mut rng);
                l.observe(rho, &env.loss(round).observe(rho)).unwrap();
            }
            let truth = env.loss(999);
            for _ in 0..50 {
                let rho: f64 = rng.random();
                let mut expectation = 0.0;
                for (cell, value) in truth.cells() {
                    let est = estimate_loss(l.weights(), &cell, value).unwrap();
                    expectation += est.probability * est.at(rho);
                }
                assert!((expectation - truth.eval(rho)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn whole_domain_feedback_matches_exponential_weights() {
        // With one feedback set the estimate equals the loss and Exp3-SET is
        // the exponentially weighted forecaster: constant losses keep p uniform.
        let mut l: Exp3Set = Exp3Set::new(ParamSpace1D::unit(), 0.7).unwrap();
        let mut env = Constant(0.8);
        play_game(&mut l, &mut env, 200, &mut seeded(5)).unwrap();
        for k in 1..10 {
            let x = k as f64 / 10.0;
            assert!((l.probability(&ho(0.0, x)).unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_restarts_on_powers_of_two() {
        let mut l = DoublingExp3::new(ParamSpace1D::unit(), |t| (1.0 / t as f64).sqrt()).unwrap();
        let mut env = RandomCells { seed: 1, cells: 3 };
        play_game(&mut l, &mut env, 10, &mut seeded(0)).unwrap();
        // Epochs: [0], [1, 2], [3, 6], [7, 14].
        assert!((l.lambda() - (1.0f64 / 8.0).sqrt()).abs() < 1e-15);
    }
}
