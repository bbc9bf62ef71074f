//! Positive piecewise-constant weight functions over an interval.
//!
//! [`WeightTree`] stores one node per constant piece in an AVL tree keyed by
//! the piece's left endpoint. Every node caches the integral of its subtree
//! and carries a pending multiplier for its children, so multiplying the
//! function on `[a, b)` touches `O(log P)` nodes after at most two boundary
//! splits. Sampling descends by cached integrals and places the point
//! uniformly inside the chosen piece.
//!
//! [`NaiveWeights`] keeps the same pieces in a flat sorted vector. It is the
//! reference the tree is tested against and a drop-in backend for the
//! learners.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::param::ParamInterval;

/// Below this total mass every piece is rescaled so the total equals the
/// domain width again.
pub const RENORMALIZE_TOTAL: f64 = 1e-150;
/// Smallest value a piece may hold; smaller values are raised to it.
pub const VALUE_FLOOR: f64 = 1e-300;

/// Operations the exponential-weights learners need from a weight store.
pub trait WeightBackend: Sized {
    fn new_uniform(domain: ParamInterval) -> Result<Self>;

    fn domain(&self) -> ParamInterval;

    /// Multiplies the function on `[set.lo, set.hi)` by `factor`.
    fn update(&mut self, set: &ParamInterval, factor: f64) -> Result<()>;

    /// Integral over `[set.lo, set.hi]`.
    fn integrate(&self, set: &ParamInterval) -> Result<f64>;

    fn total(&self) -> f64;

    /// Inverse-CDF sample for a uniform `u ∈ [0, 1)`.
    fn draw_with(&self, u: f64) -> f64;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw_with(rng.random::<f64>())
    }

    fn piece_count(&self) -> usize;

    /// `(start, end, value)` for every piece, left to right.
    fn pieces(&self) -> Vec<(f64, f64, f64)>;

    /// Multiplies the whole function by `factor`.
    fn rescale(&mut self, factor: f64);
}

fn check_domain(domain: &ParamInterval) -> Result<()> {
    if domain.is_degenerate() {
        return Err(Error::InvalidInterval {
            lo: domain.lo,
            hi: domain.hi,
            reason: "weights need a non-degenerate domain",
        });
    }
    Ok(())
}

fn check_within(set: &ParamInterval, domain: &ParamInterval) -> Result<()> {
    if set.lo < domain.lo || set.hi > domain.hi {
        return Err(Error::OutOfDomain {
            lo: set.lo,
            hi: set.hi,
            domain_lo: domain.lo,
            domain_hi: domain.hi,
        });
    }
    Ok(())
}

fn check_factor(factor: f64) -> Result<()> {
    if factor > 0.0 && factor.is_finite() {
        Ok(())
    } else {
        Err(invalid("u", format!("weight multiplier must be positive and finite, got {factor}")))
    }
}

fn overlap(start: f64, end: f64, a: f64, b: f64) -> f64 {
    (end.min(b) - start.max(a)).max(0.0)
}

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    start: f64,
    end: f64,
    value: f64,
    sum: f64,
    min_value: f64,
    /// Pending multiplier for both children.
    tag: f64,
    span_lo: f64,
    span_hi: f64,
    left: u32,
    right: u32,
    height: i32,
}

impl Node {
    fn leaf(start: f64, end: f64, value: f64) -> Self {
        Self {
            start,
            end,
            value,
            sum: value * (end - start),
            min_value: value,
            tag: 1.0,
            span_lo: start,
            span_hi: end,
            left: NIL,
            right: NIL,
            height: 1,
        }
    }
}

/// Balanced tree over the pieces of a positive piecewise-constant function.
#[derive(Clone, Debug)]
pub struct WeightTree {
    domain: ParamInterval,
    nodes: Vec<Node>,
    root: u32,
}

impl WeightTree {
    pub fn new_uniform(domain: ParamInterval) -> Result<Self> {
        check_domain(&domain)?;
        Ok(Self {
            domain,
            nodes: vec![Node::leaf(domain.lo, domain.hi, 1.0)],
            root: 0,
        })
    }

    pub fn height(&self) -> usize {
        self.h(self.root) as usize
    }

    /// Weight at `x` (right-continuous).
    pub fn value_at(&self, x: f64) -> f64 {
        let mut idx = self.root;
        let mut mult = 1.0;
        while idx != NIL {
            let n = &self.nodes[idx as usize];
            if x < n.start {
                mult *= n.tag;
                idx = n.left;
            } else if x >= n.end && n.right != NIL {
                mult *= n.tag;
                idx = n.right;
            } else {
                return n.value * mult;
            }
        }
        0.0
    }

    fn h(&self, idx: u32) -> i32 {
        if idx == NIL {
            0
        } else {
            self.nodes[idx as usize].height
        }
    }

    fn apply(&mut self, idx: u32, factor: f64) {
        if idx == NIL {
            return;
        }
        let n = &mut self.nodes[idx as usize];
        n.value *= factor;
        n.sum *= factor;
        n.min_value *= factor;
        n.tag *= factor;
    }

    fn push(&mut self, idx: u32) {
        let (tag, l, r) = {
            let n = &self.nodes[idx as usize];
            (n.tag, n.left, n.right)
        };
        if tag != 1.0 {
            self.apply(l, tag);
            self.apply(r, tag);
            self.nodes[idx as usize].tag = 1.0;
        }
    }

    fn pull(&mut self, idx: u32) {
        let (l, r) = {
            let n = &self.nodes[idx as usize];
            (n.left, n.right)
        };
        let (mut sum, mut min_value, mut height) = {
            let n = &self.nodes[idx as usize];
            (n.value * (n.end - n.start), n.value, 0)
        };
        let mut span_lo = self.nodes[idx as usize].start;
        let mut span_hi = self.nodes[idx as usize].end;
        if l != NIL {
            let c = &self.nodes[l as usize];
            sum += c.sum;
            min_value = min_value.min(c.min_value);
            height = height.max(c.height);
            span_lo = c.span_lo;
        }
        if r != NIL {
            let c = &self.nodes[r as usize];
            sum += c.sum;
            min_value = min_value.min(c.min_value);
            height = height.max(c.height);
            span_hi = c.span_hi;
        }
        let n = &mut self.nodes[idx as usize];
        n.sum = sum;
        n.min_value = min_value;
        n.height = height + 1;
        n.span_lo = span_lo;
        n.span_hi = span_hi;
    }

    fn rotate_right(&mut self, idx: u32) -> u32 {
        let l = self.nodes[idx as usize].left;
        self.push(idx);
        self.push(l);
        self.nodes[idx as usize].left = self.nodes[l as usize].right;
        self.nodes[l as usize].right = idx;
        self.pull(idx);
        self.pull(l);
        l
    }

    fn rotate_left(&mut self, idx: u32) -> u32 {
        let r = self.nodes[idx as usize].right;
        self.push(idx);
        self.push(r);
        self.nodes[idx as usize].right = self.nodes[r as usize].left;
        self.nodes[r as usize].left = idx;
        self.pull(idx);
        self.pull(r);
        r
    }

    fn rebalance(&mut self, idx: u32) -> u32 {
        self.pull(idx);
        let (l, r) = {
            let n = &self.nodes[idx as usize];
            (n.left, n.right)
        };
        let balance = self.h(l) - self.h(r);
        if balance > 1 {
            let ll = self.nodes[l as usize].left;
            let lr = self.nodes[l as usize].right;
            if self.h(lr) > self.h(ll) {
                self.push(idx);
                let nl = self.rotate_left(l);
                self.nodes[idx as usize].left = nl;
            }
            return self.rotate_right(idx);
        }
        if balance < -1 {
            let rl = self.nodes[r as usize].left;
            let rr = self.nodes[r as usize].right;
            if self.h(rl) > self.h(rr) {
                self.push(idx);
                let nr = self.rotate_right(r);
                self.nodes[idx as usize].right = nr;
            }
            return self.rotate_left(idx);
        }
        idx
    }

    fn insert_leftmost(&mut self, idx: u32, new: u32) -> u32 {
        if idx == NIL {
            return new;
        }
        self.push(idx);
        let l = self.nodes[idx as usize].left;
        let nl = self.insert_leftmost(l, new);
        self.nodes[idx as usize].left = nl;
        self.rebalance(idx)
    }

    /// Splits the piece strictly containing `x` into `[start, x)` and `[x, end)`.
    fn split_at(&mut self, idx: u32, x: f64) -> u32 {
        if idx == NIL {
            return NIL;
        }
        self.push(idx);
        let (start, end) = {
            let n = &self.nodes[idx as usize];
            (n.start, n.end)
        };
        if x < start {
            let l = self.nodes[idx as usize].left;
            let nl = self.split_at(l, x);
            self.nodes[idx as usize].left = nl;
        } else if x >= end {
            let r = self.nodes[idx as usize].right;
            let nr = self.split_at(r, x);
            self.nodes[idx as usize].right = nr;
        } else if x > start {
            let value = self.nodes[idx as usize].value;
            self.nodes[idx as usize].end = x;
            let new = self.nodes.len() as u32;
            self.nodes.push(Node::leaf(x, end, value));
            let r = self.nodes[idx as usize].right;
            let nr = self.insert_leftmost(r, new);
            self.nodes[idx as usize].right = nr;
        } else {
            return idx;
        }
        self.rebalance(idx)
    }

    fn multiply(&mut self, idx: u32, a: f64, b: f64, factor: f64) {
        if idx == NIL {
            return;
        }
        let (span_lo, span_hi) = {
            let n = &self.nodes[idx as usize];
            (n.span_lo, n.span_hi)
        };
        if span_hi <= a || span_lo >= b {
            return;
        }
        if a <= span_lo && span_hi <= b {
            self.apply(idx, factor);
            return;
        }
        self.push(idx);
        let (start, end, l, r) = {
            let n = &self.nodes[idx as usize];
            (n.start, n.end, n.left, n.right)
        };
        if a <= start && end <= b {
            self.nodes[idx as usize].value *= factor;
        }
        self.multiply(l, a, b, factor);
        self.multiply(r, a, b, factor);
        self.pull(idx);
    }

    fn query(&self, idx: u32, a: f64, b: f64, mult: f64) -> f64 {
        if idx == NIL {
            return 0.0;
        }
        let n = &self.nodes[idx as usize];
        if n.span_hi <= a || n.span_lo >= b {
            return 0.0;
        }
        if a <= n.span_lo && n.span_hi <= b {
            return n.sum * mult;
        }
        let child = mult * n.tag;
        overlap(n.start, n.end, a, b) * n.value * mult
            + self.query(n.left, a, b, child)
            + self.query(n.right, a, b, child)
    }

    fn raise_floor(&mut self, idx: u32) {
        if idx == NIL || self.nodes[idx as usize].min_value >= VALUE_FLOOR {
            return;
        }
        self.push(idx);
        if self.nodes[idx as usize].value < VALUE_FLOOR {
            self.nodes[idx as usize].value = VALUE_FLOOR;
        }
        let (l, r) = {
            let n = &self.nodes[idx as usize];
            (n.left, n.right)
        };
        self.raise_floor(l);
        self.raise_floor(r);
        self.pull(idx);
    }

    fn collect(&self, idx: u32, mult: f64, out: &mut Vec<(f64, f64, f64)>) {
        if idx == NIL {
            return;
        }
        let n = &self.nodes[idx as usize];
        self.collect(n.left, mult * n.tag, out);
        out.push((n.start, n.end, n.value * mult));
        self.collect(n.right, mult * n.tag, out);
    }

    fn guard_underflow(&mut self) {
        let total = self.nodes[self.root as usize].sum;
        if total < RENORMALIZE_TOTAL {
            self.apply(self.root, self.domain.width() / total);
        }
        self.raise_floor(self.root);
    }

    /// Checks every structural invariant; used by tests.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let pieces = self.pieces();
        if pieces.len() != self.nodes.len() {
            return Err(format!("{} pieces but {} nodes", pieces.len(), self.nodes.len()));
        }
        let mut prev = self.domain.lo;
        for &(s, e, v) in &pieces {
            if s != prev || e <= s {
                return Err(format!("pieces do not tile the domain at {s}"));
            }
            if !(v > 0.0) {
                return Err(format!("non-positive value {v} on [{s}, {e})"));
            }
            prev = e;
        }
        if prev != self.domain.hi {
            return Err("pieces stop short of the domain end".into());
        }
        self.check_node(self.root, 1.0).map(|_| ())
    }

    fn check_node(&self, idx: u32, mult: f64) -> std::result::Result<(f64, i32), String> {
        if idx == NIL {
            return Ok((0.0, 0));
        }
        let n = &self.nodes[idx as usize];
        let (ls, lh) = self.check_node(n.left, mult * n.tag)?;
        let (rs, rh) = self.check_node(n.right, mult * n.tag)?;
        if (lh - rh).abs() > 1 || n.height != lh.max(rh) + 1 {
            return Err(format!("unbalanced node at {}", n.start));
        }
        let naive = ls + rs + n.value * mult * (n.end - n.start);
        let cached = n.sum * mult;
        if (naive - cached).abs() > 1e-12 * naive.abs().max(f64::MIN_POSITIVE) {
            return Err(format!("cached integral {cached} != {naive} at {}", n.start));
        }
        Ok((naive, n.height))
    }
}

impl WeightBackend for WeightTree {
    fn new_uniform(domain: ParamInterval) -> Result<Self> {
        WeightTree::new_uniform(domain)
    }

    fn domain(&self) -> ParamInterval {
        self.domain
    }

    fn update(&mut self, set: &ParamInterval, factor: f64) -> Result<()> {
        check_factor(factor)?;
        check_within(set, &self.domain)?;
        if set.is_degenerate() {
            return Ok(());
        }
        let (a, b) = (set.lo, set.hi);
        if a > self.domain.lo {
            self.root = self.split_at(self.root, a);
        }
        if b < self.domain.hi {
            self.root = self.split_at(self.root, b);
        }
        self.multiply(self.root, a, b, factor);
        self.guard_underflow();
        Ok(())
    }

    fn integrate(&self, set: &ParamInterval) -> Result<f64> {
        check_within(set, &self.domain)?;
        if set.is_degenerate() {
            return Ok(0.0);
        }
        Ok(self.query(self.root, set.lo, set.hi, 1.0))
    }

    fn total(&self) -> f64 {
        self.nodes[self.root as usize].sum
    }

    fn draw_with(&self, u: f64) -> f64 {
        let mut target = u * self.total();
        let mut idx = self.root;
        let mut mult = 1.0;
        loop {
            let n = &self.nodes[idx as usize];
            let child = mult * n.tag;
            if n.left != NIL {
                let left = self.nodes[n.left as usize].sum * child;
                if target < left {
                    idx = n.left;
                    mult = child;
                    continue;
                }
                target -= left;
            }
            let width = n.end - n.start;
            let own = n.value * mult * width;
            if target < own || n.right == NIL {
                let frac = (target / own).clamp(0.0, 1.0);
                return (n.start + frac * width).min(n.end);
            }
            target -= own;
            idx = n.right;
            mult = child;
        }
    }

    fn piece_count(&self) -> usize {
        self.nodes.len()
    }

    fn pieces(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.nodes.len());
        self.collect(self.root, 1.0, &mut out);
        out
    }

    fn rescale(&mut self, factor: f64) {
        self.apply(self.root, factor);
    }
}

/// Flat sorted list of pieces with linear-time operations.
#[derive(Clone, Debug)]
pub struct NaiveWeights {
    domain: ParamInterval,
    pieces: Vec<(f64, f64, f64)>,
}

impl NaiveWeights {
    fn split_at(&mut self, x: f64) {
        let i = self.pieces.partition_point(|p| p.1 <= x);
        if i < self.pieces.len() {
            let (s, e, v) = self.pieces[i];
            if s < x && x < e {
                self.pieces[i].1 = x;
                self.pieces.insert(i + 1, (x, e, v));
            }
        }
    }
}

impl WeightBackend for NaiveWeights {
    fn new_uniform(domain: ParamInterval) -> Result<Self> {
        check_domain(&domain)?;
        Ok(Self {
            domain,
            pieces: vec![(domain.lo, domain.hi, 1.0)],
        })
    }

    fn domain(&self) -> ParamInterval {
        self.domain
    }

    fn update(&mut self, set: &ParamInterval, factor: f64) -> Result<()> {
        check_factor(factor)?;
        check_within(set, &self.domain)?;
        if set.is_degenerate() {
            return Ok(());
        }
        self.split_at(set.lo);
        self.split_at(set.hi);
        for p in &mut self.pieces {
            if p.0 >= set.lo && p.1 <= set.hi {
                p.2 *= factor;
            }
        }
        let total = self.total();
        if total < RENORMALIZE_TOTAL {
            self.rescale(self.domain.width() / total);
        }
        for p in &mut self.pieces {
            if p.2 < VALUE_FLOOR {
                p.2 = VALUE_FLOOR;
            }
        }
        Ok(())
    }

    fn integrate(&self, set: &ParamInterval) -> Result<f64> {
        check_within(set, &self.domain)?;
        Ok(self
            .pieces
            .iter()
            .map(|&(s, e, v)| overlap(s, e, set.lo, set.hi) * v)
            .sum())
    }

    fn total(&self) -> f64 {
        self.pieces.iter().map(|&(s, e, v)| (e - s) * v).sum()
    }

    fn draw_with(&self, u: f64) -> f64 {
        let mut target = u * self.total();
        let last = self.pieces.len() - 1;
        for (i, &(s, e, v)) in self.pieces.iter().enumerate() {
            let own = v * (e - s);
            if target < own || i == last {
                let frac = (target / own).clamp(0.0, 1.0);
                return (s + frac * (e - s)).min(e);
            }
            target -= own;
        }
        unreachable!("a weight function always has at least one piece")
    }

    fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    fn pieces(&self) -> Vec<(f64, f64, f64)> {
        self.pieces.clone()
    }

    fn rescale(&mut self, factor: f64) {
        for p in &mut self.pieces {
            p.2 *= factor;
        }
    }
}
