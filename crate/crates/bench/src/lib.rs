//! Seeded workloads shared by the criterion benchmarks.

use rand::Rng;
use semibandit::clustering::{sample_smoothed_distances, DistanceMatrix};
use semibandit::exp3::{Exp3Set, Learner};
use semibandit::experiment::SyntheticEnv;
use semibandit::knapsack::{sample_smoothed_instance, KnapsackInstance, SizeModel};
use semibandit::rng::seeded;
use semibandit::{ParamInterval, ParamSpace1D, WeightBackend, WeightTree};

/// `count` random half-open updates `(set, factor)` on `[0, 1]`.
pub fn update_sets(count: usize, seed: u64) -> Vec<(ParamInterval, f64)> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let a: f64 = rng.random();
            let w: f64 = rng.random::<f64>() * 0.2;
            let hi = (a + w).min(1.0);
            let lo = (hi - w.max(1e-6)).max(0.0);
            (ParamInterval::half_open(lo, hi).unwrap(), rng.random_range(0.5..1.0))
        })
        .collect()
}

/// A weight tree after `updates` random updates, so it holds about
/// `2·updates` pieces.
pub fn grown_tree(updates: usize, seed: u64) -> WeightTree {
    let mut tree = WeightTree::new_uniform(ParamInterval::closed(0.0, 1.0).unwrap()).unwrap();
    for (set, f) in update_sets(updates, seed) {
        tree.update(&set, f).unwrap();
    }
    tree
}

/// Exp3-SET on the synthetic environment after `rounds` rounds.
pub fn warmed_learner(rounds: usize, seed: u64) -> (Exp3Set, SyntheticEnv) {
    let mut env = SyntheticEnv::new(8, seed).unwrap();
    let mut learner: Exp3Set = Exp3Set::new(ParamSpace1D::unit(), 0.01).unwrap();
    let mut rng = seeded(seed);
    for t in 0..rounds {
        learner.play_round(&mut env, t, &mut rng).unwrap();
    }
    (learner, env)
}

pub fn knapsack_instances(n: usize, count: usize, seed: u64) -> Vec<KnapsackInstance> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| sample_smoothed_instance(n, 10.0, 10.0, &SizeModel::Uniform, &mut rng).unwrap())
        .collect()
}

pub fn distance_matrices(n: usize, count: usize, seed: u64) -> Vec<DistanceMatrix> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| sample_smoothed_distances(n, 1.0, 2.0, &mut rng).unwrap())
        .collect()
}
