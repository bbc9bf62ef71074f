use semibandit::WeightBackend;
use semibandit_bench::{distance_matrices, grown_tree, knapsack_instances, update_sets, warmed_learner};

#[test]
fn workloads_are_seeded() {
    assert_eq!(update_sets(50, 1), update_sets(50, 1));
    assert_ne!(update_sets(50, 1), update_sets(50, 2));
    assert_eq!(knapsack_instances(12, 3, 4), knapsack_instances(12, 3, 4));
    let a = distance_matrices(6, 2, 5);
    let b = distance_matrices(6, 2, 5);
    assert!((0..6).all(|i| (0..6).all(|j| a[1].get(i, j) == b[1].get(i, j))));
}

#[test]
fn workloads_have_requested_sizes() {
    assert!(update_sets(100, 3).iter().all(|(s, f)| s.width() > 0.0 && (0.5..1.0).contains(f)));
    let tree = grown_tree(500, 3);
    assert!(tree.piece_count() > 500 && tree.piece_count() <= 1001);
    assert!(tree.check_invariants().is_ok());
    assert!(knapsack_instances(30, 2, 1).iter().all(|k| k.len() == 30));
    let (learner, _) = warmed_learner(200, 1);
    assert_eq!(learner.round(), 200);
}
