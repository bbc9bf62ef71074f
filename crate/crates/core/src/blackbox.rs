//! Semi-bandit feedback for any single-parameter algorithm whose output is
//! piecewise constant in `ρ ∈ [0, 1]` and never repeats across pieces: two
//! binary searches for the ends of the piece containing `ρ`.

use crate::error::{invalid, Result};
use crate::knapsack::{greedy, KnapsackInstance};

pub trait PiecewiseUniqueAlgorithm {
    type Instance: ?Sized;
    type Output: PartialEq;

    fn evaluate(&self, x: &Self::Instance, rho: f64) -> Self::Output;
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlackboxFeedback<Y> {
    pub output: Y,
    /// Every point of `[lo, hi]` has the same output as `ρ`.
    pub lo: f64,
    pub hi: f64,
    pub evaluations: usize,
}

/// `2⌈log₂(1/ε)⌉ + 1`.
pub fn evaluation_bound(epsilon: f64) -> usize {
    2 * (1.0 / epsilon).log2().ceil() as usize + 1
}

/// Returns `[ρmin, ρmax] ∋ ρ` on which the output is that at `ρ`, with the
/// true piece inside `[ρmin − ε, ρmax + ε]`.
pub fn binary_search_feedback<A: PiecewiseUniqueAlgorithm>(
    alg: &A,
    x: &A::Instance,
    rho: f64,
    epsilon: f64,
) -> Result<BlackboxFeedback<A::Output>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("need 0 < ε < 1, got {epsilon}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} outside [0, 1]")));
    }
    let output = alg.evaluate(x, rho);
    let mut evaluations = 1;
    // The piece's left end lies in [a, b].
    let (mut a, mut b) = (0.0, rho);
    while b - a > epsilon {
        let m = 0.5 * (a + b);
        evaluations += 1;
        if alg.evaluate(x, m) == output {
            b = m;
        } else {
            a = m;
        }
    }
    // The right end lies in [c, d].
    let (mut c, mut d) = (rho, 1.0);
    while d - c > epsilon {
        let m = 0.5 * (c + d);
        evaluations += 1;
        if alg.evaluate(x, m) == output {
            c = m;
        } else {
            d = m;
        }
    }
    Ok(BlackboxFeedback {
        output,
        lo: b,
        hi: c,
        evaluations,
    })
}

/// Exact variant for parameters on the grid `k / 2^bits`: returns the first
/// and last grid indices whose output matches that at `k`. At most
/// `2·bits + 3` evaluations.
pub fn binary_search_exact<A: PiecewiseUniqueAlgorithm>(
    alg: &A,
    x: &A::Instance,
    k: u64,
    bits: u32,
) -> Result<BlackboxFeedback<A::Output>> {
    if bits == 0 || bits > 52 {
        return Err(invalid("bits", format!("need 1..=52 bits, got {bits}")));
    }
    let top = 1u64 << bits;
    if k > top {
        return Err(invalid("k", format!("grid index {k} above 2^{bits}")));
    }
    let at = |i: u64| i as f64 / top as f64;
    let output = alg.evaluate(x, at(k));
    let mut evaluations = 1;
    // Smallest matching index: matches at b, not known to match below a.
    let (mut a, mut b) = (0u64, k);
    if a < b {
        evaluations += 1;
        if alg.evaluate(x, at(a)) == output {
            b = a;
        }
    }
    while b - a > 1 {
        let m = a + (b - a) / 2;
        evaluations += 1;
        if alg.evaluate(x, at(m)) == output {
            b = m;
        } else {
            a = m;
        }
    }
    let (mut c, mut d) = (k, top);
    if c < d {
        evaluations += 1;
        if alg.evaluate(x, at(d)) == output {
            c = d;
        }
    }
    while d - c > 1 {
        let m = c + (d - c) / 2;
        evaluations += 1;
        if alg.evaluate(x, at(m)) == output {
            c = m;
        } else {
            d = m;
        }
    }
    Ok(BlackboxFeedback {
        output,
        lo: at(b),
        hi: at(c),
        evaluations,
    })
}

/// Greedy knapsack on `[0, ρ_max]` seen through `ρ = u·ρ_max`, `u ∈ [0, 1]`.
/// The output is the pair (order, selection): the selection alone can repeat
/// across pieces.
#[derive(Clone, Copy, Debug)]
pub struct KnapsackAdapter {
    pub rho_max: f64,
}

impl PiecewiseUniqueAlgorithm for KnapsackAdapter {
    type Instance = KnapsackInstance;
    type Output = (Vec<usize>, Vec<usize>);

    fn evaluate(&self, x: &KnapsackInstance, u: f64) -> Self::Output {
        greedy(u * self.rho_max, x)
    }
}
