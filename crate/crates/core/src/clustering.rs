//! ρ-linkage: agglomerative clustering merging the pair of clusters that
//! minimizes `(1 − ρ)·dmin + ρ·dmax`, with the interval of `ρ` on which the
//! merge sequence is unchanged.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::param::{
    tile_by_probing, FeedbackObservation, ParamInterval, ParamSpace1D, PiecewiseConstant, SemiBanditEnvironment,
};
use crate::rng::round_rng;

/// A symmetric matrix of distances in `[0, B]` with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
    bound: f64,
}

impl DistanceMatrix {
    /// `entries` is row-major, `n × n`.
    pub fn new(n: usize, entries: Vec<f64>, bound: f64) -> Result<Self> {
        if n < 1 || entries.len() != n * n {
            return Err(invalid("distances", format!("need an n x n matrix, got {} entries for n = {n}", entries.len())));
        }
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(invalid("B", format!("need a positive bound, got {bound}")));
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(invalid("distances", format!("nonzero diagonal entry at {i}")));
            }
            for j in i + 1..n {
                let d = entries[i * n + j];
                if d != entries[j * n + i] {
                    return Err(invalid("distances", format!("not symmetric at ({i}, {j})")));
                }
                if !(0.0..=bound).contains(&d) {
                    return Err(invalid("distances", format!("entry {d} at ({i}, {j}) outside [0, {bound}]")));
                }
            }
        }
        Ok(Self { n, entries, bound })
    }

    /// Builds the matrix from its strict upper triangle, row by row.
    pub fn from_upper(n: usize, upper: &[f64], bound: f64) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(invalid("distances", "wrong upper-triangle length"));
        }
        let mut entries = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                entries[i * n + j] = upper[k];
                entries[j * n + i] = upper[k];
                k += 1;
            }
        }
        Self::new(n, entries, bound)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Reads `n` rows of `n` comma-separated numbers. `B` is the largest entry
    /// unless given.
    pub fn read_csv<R: BufRead>(reader: R, source: &str, bound: Option<f64>) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let row = trimmed
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|e| parse_err(i + 1, format!("`{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(parse_err(i + 1, format!("expected {} columns, found {}", first.len(), row.len())));
                }
            }
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 || rows[0].len() != n {
            return Err(parse_err(0, format!("expected a square matrix, found {n} rows")));
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        let bound = bound.unwrap_or_else(|| entries.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE));
        Self::new(n, entries, bound).map_err(|e| parse_err(0, e.to_string()))
    }

    pub fn from_path(path: &Path, bound: Option<f64>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), &path.display().to_string(), bound)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Reads one label per line; labels are arbitrary tokens, numbered in order
/// of first appearance.
pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<usize>> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let token = line.trim();
        if token.is_empty() || token.starts_with('#') {
            continue;
        }
        let next = ids.len();
        labels.push(*ids.entry(token.to_string()).or_insert(next));
    }
    Ok(labels)
}

/// A binary merge tree. Leaves are `0..n`; the `k`-th merge creates node
/// `n + k`. Two trees are equal exactly when their merge sequences are.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClusterTree {
    n: usize,
    merges: Vec<(usize, usize)>,
}

impl ClusterTree {
    pub fn leaf_count(&self) -> usize {
        self.n
    }

    /// Merges in order, each as `(left child, right child)` with the child
    /// holding the smaller point index on the left.
    pub fn merges(&self) -> &[(usize, usize)] {
        &self.merges
    }

    pub fn root(&self) -> usize {
        self.n + self.merges.len() - 1
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        node.checked_sub(self.n).map(|k| self.merges[k])
    }

    /// Points under `node`, increasing.
    pub fn points(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            match self.children(x) {
                Some((a, b)) => stack.extend([a, b]),
                None => out.push(x),
            }
        }
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkageOutcome {
    pub tree: ClusterTree,
    pub interval: ParamInterval,
}

/// Where `(1−ρ)·dmin′ + ρ·dmax′` crosses `(1−ρ)·dmin + ρ·dmax`:
/// `δmin / (δmin − δmax)`, or `None` for parallel lines.
pub fn critical_value(dmin: f64, dmax: f64, dmin2: f64, dmax2: f64) -> Option<f64> {
    let dl = dmin2 - dmin;
    let dh = dmax2 - dmax;
    (dl != dh).then(|| dl / (dl - dh))
}

/// The running `dmin`/`dmax` matrices over cluster slots. Merging frees the
/// higher slot and updates the lower one's row in `O(n)`.
#[derive(Clone, Debug)]
pub struct LinkageState {
    n: usize,
    dmin: Vec<f64>,
    dmax: Vec<f64>,
    active: Vec<usize>,
    node: Vec<usize>,
    min_leaf: Vec<usize>,
    members: Vec<Vec<usize>>,
    merges: Vec<(usize, usize)>,
}

impl LinkageState {
    pub fn new(d: &DistanceMatrix) -> Self {
        let n = d.len();
        Self {
            n,
            dmin: d.entries.clone(),
            dmax: d.entries.clone(),
            active: (0..n).collect(),
            node: (0..n).collect(),
            min_leaf: (0..n).collect(),
            members: (0..n).map(|i| vec![i]).collect(),
            merges: Vec::with_capacity(n.saturating_sub(1)),
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.active.len()
    }

    /// `(dmin, dmax)` between two active slots.
    pub fn between(&self, a: usize, b: usize) -> (f64, f64) {
        (self.dmin[a * self.n + b], self.dmax[a * self.n + b])
    }

    pub fn active_slots(&self) -> &[usize] {
        &self.active
    }

    pub fn members(&self, slot: usize) -> &[usize] {
        &self.members[slot]
    }

    pub fn merge(&mut self, a: usize, b: usize) {
        let (keep, drop) = if a < b { (a, b) } else { (b, a) };
        let n = self.n;
        for &k in &self.active {
            if k == keep || k == drop {
                continue;
            }
            let lo = self.dmin[keep * n + k].min(self.dmin[drop * n + k]);
            let hi = self.dmax[keep * n + k].max(self.dmax[drop * n + k]);
            self.dmin[keep * n + k] = lo;
            self.dmin[k * n + keep] = lo;
            self.dmax[keep * n + k] = hi;
            self.dmax[k * n + keep] = hi;
        }
        let (left, right) = if self.min_leaf[keep] < self.min_leaf[drop] {
            (self.node[keep], self.node[drop])
        } else {
            (self.node[drop], self.node[keep])
        };
        self.merges.push((left, right));
        self.node[keep] = n + self.merges.len() - 1;
        self.min_leaf[keep] = self.min_leaf[keep].min(self.min_leaf[drop]);
        let moved = std::mem::take(&mut self.members[drop]);
        self.members[keep].extend(moved);
        self.active.retain(|&s| s != drop);
    }

    fn into_tree(self) -> ClusterTree {
        ClusterTree {
            n: self.n,
            merges: self.merges,
        }
    }
}

/// Runs ρ-linkage and tightens `[ρmin, ρmax)` against every competing pair
/// at every merge. `O(n³)`.
///
/// Exact ties in `d_ρ` go to the pair that also wins just right of `ρ` (the
/// smaller `dmax − dmin`), then lexicographically on the clusters' smallest
/// point indices.
pub fn rho_linkage_with_feedback(rho: f64, d: &DistanceMatrix) -> Result<LinkageOutcome> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} outside [0, 1]")));
    }
    let n = d.len();
    let mut state = LinkageState::new(d);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n * n / 2);
    while state.cluster_count() > 1 {
        pairs.clear();
        let active = &state.active;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                pairs.push((a, b));
            }
        }
        let key = |&(a, b): &(usize, usize)| {
            let (dl, dh) = state.between(a, b);
            let (la, lb) = (state.min_leaf[a], state.min_leaf[b]);
            ((1.0 - rho) * dl + rho * dh, dh - dl, la.min(lb), la.max(lb))
        };
        let best = *pairs
            .iter()
            .min_by(|p, q| {
                let (kp, kq) = (key(p), key(q));
                kp.0.total_cmp(&kq.0)
                    .then(kp.1.total_cmp(&kq.1))
                    .then(kp.2.cmp(&kq.2))
                    .then(kp.3.cmp(&kq.3))
            })
            .expect("at least two clusters");
        let (bl, bh) = state.between(best.0, best.1);
        for &(a, b) in &pairs {
            if (a, b) == best {
                continue;
            }
            let (dl, dh) = state.between(a, b);
            if let Some(c) = critical_value(bl, bh, dl, dh) {
                if c > 0.0 && c < 1.0 {
                    if c > rho {
                        hi = hi.min(c);
                    } else {
                        lo = lo.max(c);
                    }
                }
            }
        }
        state.merge(best.0, best.1);
    }
    Ok(LinkageOutcome {
        tree: state.into_tree(),
        interval: ParamInterval::cell(lo, hi, 1.0)?,
    })
}

/// Fewest points outside the majority label of their cluster, over all
/// prunings of the tree into `k` clusters, as a fraction of `n`.
pub fn tree_cost(tree: &ClusterTree, labels: &[usize], k: usize) -> Result<f64> {
    let n = tree.leaf_count();
    if labels.len() != n {
        return Err(invalid("labels", format!("{} labels for {n} points", labels.len())));
    }
    if k == 0 || k > n {
        return Err(invalid("k", format!("need 1 <= k <= n = {n}, got {k}")));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let total_nodes = n + tree.merges().len();
    let mut hist = vec![vec![0usize; classes]; total_nodes];
    let mut size = vec![1usize; total_nodes];
    // best[v][j - 1]: most majority-labelled points when v is cut into j clusters.
    let mut best: Vec<Vec<usize>> = vec![Vec::new(); total_nodes];
    for (i, &l) in labels.iter().enumerate() {
        hist[i][l] = 1;
        best[i] = vec![1];
    }
    for (m, &(a, b)) in tree.merges().iter().enumerate() {
        let v = n + m;
        size[v] = size[a] + size[b];
        hist[v] = hist[a].iter().zip(&hist[b]).map(|(x, y)| x + y).collect();
        let cap = size[v].min(k);
        let mut row = vec![0usize; cap];
        row[0] = *hist[v].iter().max().expect("at least one class");
        for (ja, &ga) in best[a].iter().enumerate() {
            for (jb, &gb) in best[b].iter().enumerate() {
                let j = ja + jb + 1;
                if j < cap {
                    row[j] = row[j].max(ga + gb);
                }
            }
        }
        best[v] = row;
    }
    let root = tree.root();
    let correct = best[root]
        .get(k - 1)
        .copied()
        .ok_or_else(|| invalid("k", "more clusters than the tree has leaves"))?;
    Ok((n - correct) as f64 / n as f64)
}

/// Upper-triangle entries uniform on random subintervals of `[0, B]` of
/// width `1/κ`.
pub fn sample_smoothed_distances<R: Rng + ?Sized>(n: usize, bound: f64, kappa: f64, rng: &mut R) -> Result<DistanceMatrix> {
    if !(kappa * bound >= 1.0) {
        return Err(invalid("kappa", format!("need kappa >= 1/B = {}, got {kappa}", 1.0 / bound)));
    }
    let width = 1.0 / kappa;
    let upper: Vec<f64> = (0..n * n.saturating_sub(1) / 2)
        .map(|_| {
            let start = rng.random::<f64>() * (bound - width);
            (start + rng.random::<f64>() * width).min(bound)
        })
        .collect();
    DistanceMatrix::from_upper(n, &upper, bound)
}

/// Points labelled `i mod k`; each distance is uniform on a width-`1/κ`
/// window around `0.3B` within a class and `0.7B` across classes (clipped
/// into `[0, B]`), so the density stays at `κ`.
pub fn sample_planted_distances<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    bound: f64,
    kappa: f64,
    rng: &mut R,
) -> Result<(DistanceMatrix, Vec<usize>)> {
    if k == 0 || k > n {
        return Err(invalid("k", format!("need 1 <= k <= n = {n}, got {k}")));
    }
    if !(kappa * bound >= 1.0) {
        return Err(invalid("kappa", format!("need kappa >= 1/B = {}, got {kappa}", 1.0 / bound)));
    }
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let width = 1.0 / kappa;
    let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let centre = if labels[i] == labels[j] { 0.3 * bound } else { 0.7 * bound };
            let start = (centre - 0.5 * width).clamp(0.0, bound - width);
            upper.push((start + rng.random::<f64>() * width).min(bound));
        }
    }
    Ok((DistanceMatrix::from_upper(n, &upper, bound)?, labels))
}

/// The whole loss `ρ ↦ tree_cost` over `[0, 1]`, by probing cell after cell.
pub fn linkage_loss_function(d: &DistanceMatrix, labels: &[usize], k: usize) -> Result<PiecewiseConstant> {
    tile_by_probing(ParamSpace1D::unit(), |rho| {
        let out = rho_linkage_with_feedback(rho, d)?;
        Ok((out.interval, tree_cost(&out.tree, labels, k)?))
    })
}

#[derive(Clone, Debug)]
enum Source {
    Planted {
        n: usize,
        bound: f64,
        kappa: f64,
        seed: u64,
    },
    Fixed(DistanceMatrix, Vec<usize>),
}

/// A stream of clustering instances as a semi-bandit game over `[0, 1]`,
/// with loss the `k`-pruning cost against the target labels.
#[derive(Clone, Debug)]
pub struct ClusteringEnv {
    source: Source,
    k: usize,
    cached: Option<(usize, DistanceMatrix, Vec<usize>)>,
}

impl ClusteringEnv {
    pub fn planted(n: usize, k: usize, bound: f64, kappa: f64, seed: u64) -> Result<Self> {
        sample_planted_distances(n, k, bound, kappa, &mut round_rng(seed, 0))?;
        Ok(Self {
            source: Source::Planted { n, bound, kappa, seed },
            k,
            cached: None,
        })
    }

    /// The same instance every round.
    pub fn fixed(d: DistanceMatrix, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != d.len() {
            return Err(invalid("labels", format!("{} labels for {} points", labels.len(), d.len())));
        }
        if k == 0 || k > d.len() {
            return Err(invalid("k", format!("need 1 <= k <= n = {}, got {k}", d.len())));
        }
        Ok(Self {
            source: Source::Fixed(d, labels),
            k,
            cached: None,
        })
    }

    pub fn instance(&mut self, round: usize) -> Result<(&DistanceMatrix, &[usize])> {
        if self.cached.as_ref().map(|c| c.0) != Some(round) {
            let (d, labels) = match &self.source {
                Source::Planted { n, bound, kappa, seed } => {
                    sample_planted_distances(*n, self.k, *bound, *kappa, &mut round_rng(*seed, round))?
                }
                Source::Fixed(d, l) => (d.clone(), l.clone()),
            };
            self.cached = Some((round, d, labels));
        }
        let c = self.cached.as_ref().expect("just filled");
        Ok((&c.1, &c.2))
    }
}

impl SemiBanditEnvironment for ClusteringEnv {
    fn space(&self) -> ParamSpace1D {
        ParamSpace1D::unit()
    }

    fn loss_bound(&self) -> f64 {
        1.0
    }

    fn step(&mut self, rho: f64, round: usize) -> Result<FeedbackObservation> {
        let k = self.k;
        let (d, labels) = self.instance(round)?;
        let out = rho_linkage_with_feedback(rho, d)?;
        let loss = tree_cost(&out.tree, labels, k)?;
        Ok(FeedbackObservation::constant(out.interval, loss))
    }

    fn round_loss(&mut self, round: usize) -> Result<Option<PiecewiseConstant>> {
        let k = self.k;
        let (d, labels) = self.instance(round)?;
        linkage_loss_function(d, labels, k).map(Some)
    }
}
