//! Online optimization of piecewise-Lipschitz losses under semi-bandit
//! feedback.
//!
//! The crate provides the continuous Exp3-SET learner backed by an augmented
//! interval tree, a discretized Exp3-SET baseline for the full-information,
//! semi-bandit and bandit regimes, two algorithm-selection environments
//! (parameterized greedy knapsack and ρ-linkage clustering) that produce
//! semi-bandit feedback from a single run, a binary-search feedback wrapper for
//! any piecewise-unique algorithm, empirical dispersion measurements, and the
//! experiment runner behind the `semibandit` command-line tool.

pub mod blackbox;
pub mod clustering;
pub mod discretized;
pub mod dispersion;
pub mod error;
pub mod exp3;
pub mod experiment;
pub mod interval_tree;
pub mod knapsack;
pub mod param;
pub mod rng;

pub use error::{Error, Result};
pub use interval_tree::{NaiveWeights, WeightBackend, WeightTree};
pub use param::{
    FeedbackObservation, ParamInterval, ParamSpace1D, PiecewiseConstant, SemiBanditEnvironment,
    SetLoss,
};
