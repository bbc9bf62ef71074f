//! Greedy knapsack with score `v / s^ρ`, and the interval of `ρ` on which
//! a run's item ordering stays fixed.

use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::param::{FeedbackObservation, ParamInterval, ParamSpace1D, PiecewiseConstant, SemiBanditEnvironment};
use crate::rng::round_rng;

/// Default right end `R` of the parameter space `[0, R]`.
pub const DEFAULT_RHO_MAX: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct KnapsackInstance {
    values: Vec<f64>,
    sizes: Vec<f64>,
    capacity: f64,
    ln_values: Vec<f64>,
    ln_sizes: Vec<f64>,
}

impl KnapsackInstance {
    pub fn new(values: Vec<f64>, sizes: Vec<f64>, capacity: f64) -> Result<Self> {
        if values.is_empty() || values.len() != sizes.len() {
            return Err(invalid("items", "need n >= 1 items with one size per value"));
        }
        if !(capacity >= 1.0) || !capacity.is_finite() {
            return Err(invalid("capacity", format!("need C >= 1, got {capacity}")));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid("values", format!("value {v} outside [0, 1]")));
        }
        if let Some(s) = sizes.iter().find(|s| !(1.0..=capacity).contains(*s)) {
            return Err(invalid("sizes", format!("size {s} outside [1, {capacity}]")));
        }
        let ln_values = values.iter().map(|v| v.ln()).collect();
        let ln_sizes = sizes.iter().map(|s| s.ln()).collect();
        Ok(Self {
            values,
            sizes,
            capacity,
            ln_values,
            ln_sizes,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Reads the instance format: a `capacity,<C>` line, a `v,s` header,
    /// then one item per line.
    pub fn read_csv<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut capacity = None;
        let mut header_seen = false;
        let (mut values, mut sizes) = (Vec::new(), Vec::new());
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if capacity.is_none() {
                if fields.len() != 2 || fields[0] != "capacity" {
                    return Err(parse_err(line_no, "expected `capacity,<C>`".into()));
                }
                let c = fields[1]
                    .parse::<f64>()
                    .map_err(|e| parse_err(line_no, format!("capacity: {e}")))?;
                capacity = Some(c);
            } else if !header_seen {
                if fields != ["v", "s"] {
                    return Err(parse_err(line_no, "expected header `v,s`".into()));
                }
                header_seen = true;
            } else {
                if fields.len() != 2 {
                    return Err(parse_err(line_no, format!("expected 2 fields, found {}", fields.len())));
                }
                let parse = |f: &str| f.parse::<f64>().map_err(|e| parse_err(line_no, format!("`{f}`: {e}")));
                values.push(parse(fields[0])?);
                sizes.push(parse(fields[1])?);
            }
        }
        let capacity = capacity.ok_or_else(|| parse_err(0, "empty file".into()))?;
        Self::new(values, sizes, capacity).map_err(|e| parse_err(0, e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "capacity,{}", self.capacity)?;
        writeln!(out, "v,s")?;
        for (v, s) in self.values.iter().zip(&self.sizes) {
            writeln!(out, "{v},{s}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnapsackOutcome {
    /// Items in decreasing score order.
    pub order: Vec<usize>,
    /// Selected items, increasing.
    pub selected: Vec<usize>,
    pub total_value: f64,
    /// Where the ordering (and so the selection) is unchanged.
    pub interval: ParamInterval,
}

impl KnapsackOutcome {
    /// `C − Σ v`, in `[0, C]`.
    pub fn raw_loss(&self, capacity: f64) -> f64 {
        capacity - self.total_value
    }

    /// `(C − Σ v) / C`, in `[0, 1]`.
    pub fn loss(&self, capacity: f64) -> f64 {
        knapsack_loss(self, capacity)
    }
}

pub fn knapsack_loss(outcome: &KnapsackOutcome, capacity: f64) -> f64 {
    ((capacity - outcome.total_value) / capacity).clamp(0.0, 1.0)
}

/// `ln(v_a / v_b) / ln(s_a / s_b)`, or `None` when the two scores never cross.
pub fn critical_value(va: f64, sa: f64, vb: f64, sb: f64) -> Option<f64> {
    if sa == sb || va <= 0.0 || vb <= 0.0 {
        return None;
    }
    // Fixed argument order, so swapping the items gives the identical float.
    let ((va, sa), (vb, sb)) = if (va, sa) <= (vb, sb) { ((va, sa), (vb, sb)) } else { ((vb, sb), (va, sa)) };
    Some((va / vb).ln() / (sa / sb).ln())
}

/// Decreasing score, then the order just right of `ρ` (smaller size first),
/// then index. Zero-value items sort last by index.
fn order_items(rho: f64, inst: &KnapsackInstance) -> Vec<usize> {
    let score: Vec<f64> = inst
        .ln_values
        .iter()
        .zip(&inst.ln_sizes)
        .map(|(&lv, &ls)| lv - rho * ls)
        .collect();
    let mut order: Vec<usize> = (0..inst.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        score[b]
            .partial_cmp(&score[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                if score[a].is_finite() {
                    inst.sizes[a].partial_cmp(&inst.sizes[b]).unwrap_or(Ordering::Equal)
                } else {
                    Ordering::Equal
                }
            })
            .then(a.cmp(&b))
    });
    order
}

fn fill(order: &[usize], inst: &KnapsackInstance) -> (Vec<usize>, f64) {
    let mut room = inst.capacity;
    let mut selected = Vec::new();
    let mut value = 0.0;
    for &i in order {
        if inst.sizes[i] <= room {
            room -= inst.sizes[i];
            value += inst.values[i];
            selected.push(i);
        }
    }
    selected.sort_unstable();
    (selected, value)
}

/// The plain greedy run: `(order, selected)`, without interval bookkeeping.
pub fn greedy(rho: f64, inst: &KnapsackInstance) -> (Vec<usize>, Vec<usize>) {
    let order = order_items(rho, inst);
    let (selected, _) = fill(&order, inst);
    (order, selected)
}

/// One greedy run at `ρ ∈ [0, ρ_max]` plus the feedback cell, from critical
/// values of consecutive items in the score order. `O(n log n)`.
pub fn greedy_with_feedback(rho: f64, inst: &KnapsackInstance, rho_max: f64) -> Result<KnapsackOutcome> {
    if !(rho_max > 0.0) {
        return Err(invalid("rho_max", "must be positive"));
    }
    if !(0.0..=rho_max).contains(&rho) {
        return Err(invalid("rho", format!("{rho} outside [0, {rho_max}]")));
    }
    let order = order_items(rho, inst);
    let (selected, total_value) = fill(&order, inst);
    let (mut lo, mut hi) = (0.0f64, rho_max);
    for pair in order.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if let Some(c) = critical_value(inst.values[a], inst.sizes[a], inst.values[b], inst.sizes[b]) {
            if c <= rho {
                lo = lo.max(c);
            } else {
                hi = hi.min(c);
            }
        }
    }
    Ok(KnapsackOutcome {
        order,
        selected,
        total_value,
        interval: ParamInterval::cell(lo, hi, rho_max)?,
    })
}

/// Every pairwise critical value inside `[0, ρ_max]`, sorted and deduplicated.
pub fn enumerate_critical_values(inst: &KnapsackInstance, rho_max: f64) -> Vec<f64> {
    let n = inst.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            if let Some(c) = critical_value(inst.values[a], inst.sizes[a], inst.values[b], inst.sizes[b]) {
                if (0.0..=rho_max).contains(&c) {
                    out.push(c);
                }
            }
        }
    }
    out.sort_unstable_by(f64::total_cmp);
    out.dedup();
    out
}

/// The full-information loss: one greedy run per cell of the critical-value
/// partition, `O(n³ log n)`. Values are scaled losses.
pub fn full_information_loss(inst: &KnapsackInstance, rho_max: f64) -> Result<PiecewiseConstant> {
    let space = ParamSpace1D::new(0.0, rho_max)?;
    let breaks: Vec<f64> = enumerate_critical_values(inst, rho_max)
        .into_iter()
        .filter(|&c| c > 0.0 && c < rho_max)
        .collect();
    let mut values = Vec::with_capacity(breaks.len() + 1);
    let mut lo = 0.0;
    for k in 0..=breaks.len() {
        let hi = breaks.get(k).copied().unwrap_or(rho_max);
        let (_, selected) = greedy(0.5 * (lo + hi), inst);
        let value: f64 = selected.iter().map(|&i| inst.values[i]).sum();
        values.push(((inst.capacity - value) / inst.capacity).clamp(0.0, 1.0));
        lo = hi;
    }
    PiecewiseConstant::new(space, breaks, values)
}

/// How item sizes are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum SizeModel {
    /// Uniform on `[1, C]`.
    Uniform,
    /// The same sizes every round.
    Fixed(Vec<f64>),
}

/// Each value is uniform on a random subinterval of `[0, 1]` of width `1/κ`,
/// so its density is exactly `κ`.
pub fn sample_smoothed_instance<R: Rng + ?Sized>(
    n: usize,
    capacity: f64,
    kappa: f64,
    sizes: &SizeModel,
    rng: &mut R,
) -> Result<KnapsackInstance> {
    if !(kappa >= 1.0) {
        return Err(invalid("kappa", format!("need kappa >= 1, got {kappa}")));
    }
    if n == 0 {
        return Err(invalid("n", "need at least one item"));
    }
    let width = 1.0 / kappa;
    let values = (0..n)
        .map(|_| {
            let start = rng.random::<f64>() * (1.0 - width);
            start + rng.random::<f64>() * width
        })
        .collect();
    let sizes = match sizes {
        SizeModel::Uniform => (0..n).map(|_| 1.0 + rng.random::<f64>() * (capacity - 1.0)).collect(),
        SizeModel::Fixed(s) => {
            if s.len() != n {
                return Err(invalid("sizes", format!("{} fixed sizes for {n} items", s.len())));
            }
            s.clone()
        }
    };
    KnapsackInstance::new(values, sizes, capacity)
}

#[derive(Clone, Debug)]
enum Source {
    Smoothed {
        n: usize,
        capacity: f64,
        kappa: f64,
        sizes: SizeModel,
        seed: u64,
    },
    Fixed(Vec<KnapsackInstance>),
}

/// A stream of knapsack instances as a semi-bandit game over `[0, ρ_max]`
/// with losses `(C − value)/C`.
#[derive(Clone, Debug)]
pub struct KnapsackEnv {
    source: Source,
    rho_max: f64,
    cached: Option<(usize, KnapsackInstance)>,
}

impl KnapsackEnv {
    /// Round `t` draws its instance from `round_rng(seed, t)`.
    pub fn smoothed(n: usize, capacity: f64, kappa: f64, sizes: SizeModel, seed: u64, rho_max: f64) -> Result<Self> {
        // Fail early on bad parameters.
        sample_smoothed_instance(n, capacity, kappa, &sizes, &mut round_rng(seed, 0))?;
        ParamSpace1D::new(0.0, rho_max)?;
        Ok(Self {
            source: Source::Smoothed {
                n,
                capacity,
                kappa,
                sizes,
                seed,
            },
            rho_max,
            cached: None,
        })
    }

    /// Cycles through the given instances.
    pub fn fixed(instances: Vec<KnapsackInstance>, rho_max: f64) -> Result<Self> {
        if instances.is_empty() {
            return Err(invalid("instances", "need at least one instance"));
        }
        ParamSpace1D::new(0.0, rho_max)?;
        Ok(Self {
            source: Source::Fixed(instances),
            rho_max,
            cached: None,
        })
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn instance(&mut self, round: usize) -> Result<&KnapsackInstance> {
        if self.cached.as_ref().map(|(r, _)| *r) != Some(round) {
            let inst = match &self.source {
                Source::Smoothed {
                    n,
                    capacity,
                    kappa,
                    sizes,
                    seed,
                } => sample_smoothed_instance(*n, *capacity, *kappa, sizes, &mut round_rng(*seed, round))?,
                Source::Fixed(list) => list[round % list.len()].clone(),
            };
            self.cached = Some((round, inst));
        }
        Ok(&self.cached.as_ref().expect("just filled").1)
    }
}

impl SemiBanditEnvironment for KnapsackEnv {
    fn space(&self) -> ParamSpace1D {
        ParamSpace1D {
            lo: 0.0,
            hi: self.rho_max,
        }
    }

    fn loss_bound(&self) -> f64 {
        1.0
    }

    fn step(&mut self, rho: f64, round: usize) -> Result<FeedbackObservation> {
        let rho_max = self.rho_max;
        let inst = self.instance(round)?;
        let outcome = greedy_with_feedback(rho, inst, rho_max)?;
        Ok(FeedbackObservation::constant(outcome.interval, outcome.loss(inst.capacity())))
    }

    fn round_loss(&mut self, round: usize) -> Result<Option<PiecewiseConstant>> {
        let rho_max = self.rho_max;
        let inst = self.instance(round)?;
        full_information_loss(inst, rho_max).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn example() -> KnapsackInstance {
        KnapsackInstance::new(vec![0.3, 0.2, 0.1], vec![3.0, 2.0, 1.0], 4.0).unwrap()
    }

    #[test]
    fn critical_value_example() {
        assert!((critical_value(8.0, 4.0, 2.0, 2.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(critical_value(0.5, 2.0, 0.5, 2.0), None);
        assert_eq!(critical_value(0.0, 2.0, 0.5, 3.0), None);
        let (a, b) = ((0.613, 7.21), (0.377, 2.93));
        assert_eq!(critical_value(a.0, a.1, b.0, b.1), critical_value(b.0, b.1, a.0, a.1));
    }

    #[test]
    fn greedy_example() {
        let inst = example();
        let out = greedy_with_feedback(0.0, &inst, DEFAULT_RHO_MAX).unwrap();
        assert_eq!(out.order, vec![0, 1, 2]);
        assert_eq!(out.selected, vec![0, 2]);
        assert!((out.total_value - 0.4).abs() < 1e-15);
        assert!((out.raw_loss(4.0) - 3.6).abs() < 1e-15);
        assert!((out.loss(4.0) - 0.9).abs() < 1e-15);
        // Consecutive pairs (0.3,3)-(0.2,2) and (0.2,2)-(0.1,1) cross at ln1.5/ln1.5 = 1 and ln2/ln2 = 1.
        assert_eq!(out.interval.lo, 0.0);
        assert!((out.interval.hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_extremes() {
        let full = KnapsackOutcome {
            order: vec![],
            selected: vec![],
            total_value: 0.0,
            interval: ParamInterval::closed(0.0, 1.0).unwrap(),
        };
        assert_eq!(full.raw_loss(4.0), 4.0);
        assert_eq!(full.loss(4.0), 1.0);
        let best = KnapsackOutcome {
            total_value: 4.0,
            ..full
        };
        assert_eq!(best.loss(4.0), 0.0);
    }

    #[test]
    fn identical_items_have_no_boundaries() {
        let inst = KnapsackInstance::new(vec![0.5, 0.5], vec![2.0, 2.0], 3.0).unwrap();
        for rho in [0.0, 1.3, 10.0] {
            let out = greedy_with_feedback(rho, &inst, 10.0).unwrap();
            assert_eq!((out.interval.lo, out.interval.hi), (0.0, 10.0));
        }
        assert!(enumerate_critical_values(&inst, 10.0).is_empty());
    }

    #[test]
    fn enumerate_single_pair() {
        let inst = KnapsackInstance::new(vec![0.8, 0.2], vec![4.0, 2.0], 5.0).unwrap();
        assert_eq!(enumerate_critical_values(&inst, 10.0), vec![2.0]);
        assert!(enumerate_critical_values(&inst, 1.5).is_empty());
    }

    #[test]
    fn zero_values_sort_last_by_index() {
        let inst = KnapsackInstance::new(vec![0.0, 0.4, 0.0, 0.1], vec![2.0, 3.0, 1.0, 1.0], 10.0).unwrap();
        for rho in [0.0, 2.0, 9.0] {
            let out = greedy_with_feedback(rho, &inst, 10.0).unwrap();
            assert_eq!(&out.order[2..], &[0, 2]);
        }
    }

    #[test]
    fn cells_are_output_constant() {
        let mut rng = seeded(11);
        for _ in 0..20 {
            let inst = sample_smoothed_instance(8, 10.0, 10.0, &SizeModel::Uniform, &mut rng).unwrap();
            let crit = enumerate_critical_values(&inst, 10.0);
            let mut edges = vec![0.0];
            edges.extend(crit.iter().copied().filter(|&c| c > 0.0 && c < 10.0));
            edges.push(10.0);
            for w in edges.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let base = greedy(0.5 * (lo + hi), &inst).0;
                for x in [lo + 1e-9, hi - 1e-9] {
                    if x > lo && x < hi {
                        assert_eq!(greedy(x, &inst).0, base);
                    }
                }
            }
            // Each boundary changes the order.
            for &c in crit.iter().filter(|&&c| c > 1e-6 && c < 10.0 - 1e-6) {
                assert_ne!(greedy(c - 1e-7, &inst).0, greedy(c + 1e-7, &inst).0);
            }
        }
    }

    #[test]
    fn feedback_cell_is_one_enumerated_cell() {
        let mut rng = seeded(12);
        for _ in 0..50 {
            let inst = sample_smoothed_instance(7, 10.0, 10.0, &SizeModel::Uniform, &mut rng).unwrap();
            let full = full_information_loss(&inst, 10.0).unwrap();
            for _ in 0..20 {
                let rho = rng.random::<f64>() * 10.0;
                let out = greedy_with_feedback(rho, &inst, 10.0).unwrap();
                assert!(out.interval.contains(rho));
                let cell = full.cell(full.cell_index(rho));
                assert!((cell.lo - out.interval.lo).abs() < 1e-12, "{cell} vs {}", out.interval);
                assert!((cell.hi - out.interval.hi).abs() < 1e-12, "{cell} vs {}", out.interval);
                assert!((full.eval(rho) - out.loss(10.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothed_values_have_bounded_density() {
        let mut rng = seeded(13);
        assert!(sample_smoothed_instance(3, 5.0, 0.5, &SizeModel::Uniform, &mut rng).is_err());
        let kappa = 100.0;
        let mut values = Vec::new();
        while values.len() < 1_000_000 {
            let inst = sample_smoothed_instance(1, 5.0, kappa, &SizeModel::Uniform, &mut rng).unwrap();
            values.push(inst.values()[0]);
        }
        let bins = 1000;
        let mut counts = vec![0usize; bins];
        for v in &values {
            counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let max = *counts.iter().max().unwrap() as f64 / values.len() as f64 * bins as f64;
        assert!(max <= 1.1 * kappa, "max density {max}");
    }

    #[test]
    fn smoothed_instances_are_reproducible() {
        let a = sample_smoothed_instance(5, 10.0, 3.0, &SizeModel::Uniform, &mut seeded(1)).unwrap();
        let b = sample_smoothed_instance(5, 10.0, 3.0, &SizeModel::Uniform, &mut seeded(1)).unwrap();
        assert_eq!(a, b);
        let fixed = SizeModel::Fixed(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let c = sample_smoothed_instance(5, 10.0, 3.0, &fixed, &mut seeded(1)).unwrap();
        assert_eq!(c.sizes(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn csv_roundtrip() {
        let inst = example();
        let mut buf = Vec::new();
        inst.write_csv(&mut buf).unwrap();
        let back = KnapsackInstance::read_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, inst);
        let bad = "capacity,4\nv,s\n0.3,x\n";
        match KnapsackInstance::read_csv(bad.as_bytes(), "bad.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
