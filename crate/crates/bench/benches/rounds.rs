use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use semibandit::clustering::rho_linkage_with_feedback;
use semibandit::exp3::Learner;
use semibandit::knapsack::{full_information_loss, greedy_with_feedback};
use semibandit::rng::seeded;
use semibandit::{ParamInterval, WeightBackend};
use semibandit_bench::{distance_matrices, grown_tree, knapsack_instances, update_sets, warmed_learner};

fn tree_ops(c: &mut Criterion) {
    let mut g = c.benchmark_group("weight_tree");
    for pieces in [1_000usize, 10_000, 100_000] {
        let tree = grown_tree(pieces / 2, 1);
        let sets = update_sets(256, 2);
        g.bench_with_input(BenchmarkId::new("update", pieces), &pieces, |b, _| {
            let mut t = tree.clone();
            let mut i = 0;
            b.iter(|| {
                let (set, f) = &sets[i % sets.len()];
                t.update(set, *f).unwrap();
                i += 1;
            })
        });
        g.bench_with_input(BenchmarkId::new("draw", pieces), &pieces, |b, _| {
            let mut rng = seeded(3);
            b.iter(|| black_box(tree.draw(&mut rng)))
        });
        g.bench_with_input(BenchmarkId::new("integrate", pieces), &pieces, |b, _| {
            let mut rng = seeded(4);
            b.iter(|| {
                let a: f64 = rng.random();
                let set = ParamInterval::closed(a * 0.5, a * 0.5 + 0.3).unwrap();
                black_box(tree.integrate(&set).unwrap())
            })
        });
    }
    g.finish();
}

fn exp3_rounds(c: &mut Criterion) {
    let mut g = c.benchmark_group("exp3_round");
    for t in [1_000usize, 10_000, 100_000] {
        let (learner, env) = warmed_learner(t, 5);
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            let (mut learner, mut env) = (learner.clone(), env.clone());
            let mut rng = seeded(6);
            let mut round = t;
            b.iter(|| {
                black_box(learner.play_round(&mut env, round, &mut rng).unwrap());
                round += 1;
            })
        });
    }
    g.finish();
}

fn knapsack_feedback(c: &mut Criterion) {
    let mut g = c.benchmark_group("knapsack");
    g.sample_size(20);
    for n in [25usize, 50, 100] {
        let insts = knapsack_instances(n, 16, 7);
        g.bench_with_input(BenchmarkId::new("semi_bandit", n), &n, |b, _| {
            let mut rng = seeded(8);
            let mut i = 0;
            b.iter(|| {
                let rho = rng.random::<f64>() * 10.0;
                i += 1;
                black_box(greedy_with_feedback(rho, &insts[i % insts.len()], 10.0).unwrap())
            })
        });
        g.bench_with_input(BenchmarkId::new("full_information", n), &n, |b, _| {
            let mut i = 0;
            b.iter(|| {
                i += 1;
                black_box(full_information_loss(&insts[i % insts.len()], 10.0).unwrap())
            })
        });
    }
    g.finish();
}

fn linkage(c: &mut Criterion) {
    let mut g = c.benchmark_group("rho_linkage");
    for n in [10usize, 20, 40] {
        let ds = distance_matrices(n, 8, 9);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            let mut rng = seeded(10);
            let mut i = 0;
            b.iter(|| {
                i += 1;
                black_box(rho_linkage_with_feedback(rng.random(), &ds[i % ds.len()]).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, tree_ops, exp3_rounds, knapsack_feedback, linkage);
criterion_main!(benches);
