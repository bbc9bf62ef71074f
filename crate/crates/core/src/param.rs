//! Parameter spaces, feedback observations and loss transforms shared by
//! every learner and environment.
//!
//! Feedback sets follow one endpoint convention throughout the crate: a cell
//! of a partition is half-open `[lo, hi)`, except the rightmost cell, which is
//! closed. Membership of a point that lands exactly on a shared endpoint is
//! therefore never ambiguous.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl ParamInterval {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidInterval {
                lo,
                hi,
                reason: "endpoints must be finite",
            });
        }
        if lo > hi {
            return Err(Error::InvalidInterval {
                lo,
                hi,
                reason: "lo > hi",
            });
        }
        if lo == hi && !(lo_closed && hi_closed) {
            return Err(Error::InvalidInterval {
                lo,
                hi,
                reason: "a degenerate interval must be closed at both ends",
            });
        }
        Ok(Self {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }

    /// `[lo, hi]`
    pub fn closed(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, true)
    }

    /// `[lo, hi)`
    pub fn half_open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, false)
    }

    /// A partition cell under the crate convention: `[lo, hi)`, or `[lo, hi]`
    /// when `hi` is the right end of the space.
    pub fn cell(lo: f64, hi: f64, space_hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, hi >= space_hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    /// Closure containment: `[lo, hi] ⊆ [other.lo, other.hi]`.
    pub fn is_within(&self, other: &ParamInterval) -> bool {
        self.lo >= other.lo && self.hi <= other.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl fmt::Display for ParamInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// A compact 1-D parameter space `[lo, hi]` with `hi > lo`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamSpace1D {
    pub lo: f64,
    pub hi: f64,
}

impl ParamSpace1D {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidInterval {
                lo,
                hi,
                reason: "a parameter space needs hi > lo",
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Radius of the smallest ball containing the space.
    pub fn radius(&self) -> f64 {
        0.5 * self.width()
    }

    pub fn interval(&self) -> ParamInterval {
        ParamInterval {
            lo: self.lo,
            hi: self.hi,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// The loss revealed on a feedback set.
#[derive(Clone)]
pub enum SetLoss {
    /// Piecewise-constant environments reveal one value for the whole set.
    Constant(f64),
    /// General evaluator, meaningful on the observed set only.
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl SetLoss {
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            SetLoss::Constant(v) => *v,
            SetLoss::Function(f) => f(rho),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            SetLoss::Constant(v) => Some(*v),
            SetLoss::Function(_) => None,
        }
    }

    fn map(&self, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> SetLoss {
        match self {
            SetLoss::Constant(v) => SetLoss::Constant(g(*v)),
            SetLoss::Function(f) => {
                let f = Arc::clone(f);
                SetLoss::Function(Arc::new(move |rho| g(f(rho))))
            }
        }
    }
}

impl fmt::Debug for SetLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetLoss::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            SetLoss::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// What the learner sees after playing a point: the feedback set that
/// contains it and the loss on that whole set.
#[derive(Clone, Debug)]
pub struct FeedbackObservation {
    pub set: ParamInterval,
    pub loss: SetLoss,
    pub loss_at_play: f64,
}

impl FeedbackObservation {
    pub fn constant(set: ParamInterval, loss: f64) -> Self {
        Self {
            set,
            loss: SetLoss::Constant(loss),
            loss_at_play: loss,
        }
    }

    /// `H - u` applied to a utility observation; the set is unchanged.
    pub fn utility_to_loss(&self, h: f64) -> Result<Self> {
        check_bound(h)?;
        Ok(Self {
            set: self.set,
            loss: self.loss.map(move |u| h - u),
            loss_at_play: h - self.loss_at_play,
        })
    }

    /// Loss divided by `h`; the set is unchanged.
    pub fn rescaled(&self, h: f64) -> Result<Self> {
        check_bound(h)?;
        Ok(Self {
            set: self.set,
            loss: self.loss.map(move |l| l / h),
            loss_at_play: self.loss_at_play / h,
        })
    }
}

fn check_bound(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(invalid("H", format!("loss bound must be positive, got {h}")))
    }
}

/// `ℓ(ρ) = H − u(ρ)`.
pub fn utility_to_loss<U>(utility: U, h: f64) -> Result<impl Fn(f64) -> f64>
where
    U: Fn(f64) -> f64,
{
    check_bound(h)?;
    Ok(move |rho| h - utility(rho))
}

/// `ℓ(ρ) / H`, mapping a `[0, H]` loss into `[0, 1]`.
pub fn rescale_losses<L>(loss: L, h: f64) -> Result<impl Fn(f64) -> f64>
where
    L: Fn(f64) -> f64,
{
    check_bound(h)?;
    Ok(move |rho| loss(rho) / h)
}

/// Enlarges the space by `r0` on both sides and evaluates the loss at the
/// projection of the played point back onto the original space.
pub fn extend_domain_with_projection<L>(
    space: ParamSpace1D,
    r0: f64,
    loss: L,
) -> Result<(ParamSpace1D, impl Fn(f64) -> f64)>
where
    L: Fn(f64) -> f64,
{
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(invalid("r0", format!("must be positive, got {r0}")));
    }
    let extended = ParamSpace1D::new(space.lo - r0, space.hi + r0)?;
    Ok((extended, move |rho: f64| loss(space.clamp(rho))))
}

/// A piecewise-constant function on `[lo, hi]`: `values[i]` holds on the
/// cell between `breaks[i - 1]` and `breaks[i]` (half-open, last cell closed).
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant {
    space: ParamSpace1D,
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(space: ParamSpace1D, breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(invalid(
                "values",
                format!("{} values for {} breakpoints", values.len(), breaks.len()),
            ));
        }
        let mut prev = space.lo;
        for &b in &breaks {
            if !(b > prev && b < space.hi) {
                return Err(invalid(
                    "breaks",
                    format!("breakpoints must be strictly increasing inside ({}, {})", space.lo, space.hi),
                ));
            }
            prev = b;
        }
        Ok(Self {
            space,
            breaks,
            values,
        })
    }

    pub fn constant(space: ParamSpace1D, value: f64) -> Self {
        Self {
            space,
            breaks: Vec::new(),
            values: vec![value],
        }
    }

    /// Builds the function from cells that tile the space in order.
    pub fn from_cells(space: ParamSpace1D, cells: &[(ParamInterval, f64)]) -> Result<Self> {
        if cells.is_empty() {
            return Err(invalid("cells", "no cells"));
        }
        let mut breaks = Vec::with_capacity(cells.len() - 1);
        let mut values = Vec::with_capacity(cells.len());
        for (i, (cell, v)) in cells.iter().enumerate() {
            if i == 0 {
                if cell.lo != space.lo {
                    return Err(invalid("cells", "first cell must start at the space's left end"));
                }
            } else {
                breaks.push(cell.lo);
            }
            values.push(*v);
        }
        if cells[cells.len() - 1].0.hi != space.hi {
            return Err(invalid("cells", "last cell must end at the space's right end"));
        }
        Self::new(space, breaks, values)
    }

    pub fn space(&self) -> ParamSpace1D {
        self.space
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    pub fn cell_index(&self, rho: f64) -> usize {
        self.breaks.partition_point(|&b| b <= rho)
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.values[self.cell_index(rho)]
    }

    pub fn cell(&self, index: usize) -> ParamInterval {
        let lo = if index == 0 { self.space.lo } else { self.breaks[index - 1] };
        let hi = if index == self.breaks.len() { self.space.hi } else { self.breaks[index] };
        ParamInterval {
            lo,
            hi,
            lo_closed: true,
            hi_closed: index == self.breaks.len(),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (ParamInterval, f64)> + '_ {
        (0..self.values.len()).map(move |i| (self.cell(i), self.values[i]))
    }

    /// The observation an environment with this loss reveals at `rho`.
    pub fn observe(&self, rho: f64) -> FeedbackObservation {
        let i = self.cell_index(rho);
        FeedbackObservation::constant(self.cell(i), self.values[i])
    }

    /// Breakpoints across which the value actually changes.
    pub fn discontinuities(&self) -> Vec<f64> {
        self.breaks
            .iter()
            .enumerate()
            .filter(|(i, _)| self.values[*i] != self.values[*i + 1])
            .map(|(_, &b)| b)
            .collect()
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            space: self.space,
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Recovers a full partition of `[space.lo, space.hi]` from a feedback
/// oracle by probing just right of every known boundary and bisecting any gap
/// the returned cell leaves. Exact whenever the oracle's cells are exact.
pub fn tile_by_probing<F>(space: ParamSpace1D, mut probe: F) -> Result<PiecewiseConstant>
where
    F: FnMut(f64) -> Result<(ParamInterval, f64)>,
{
    let nudge = space.width() * 1e-9;
    let mut cells: Vec<(ParamInterval, f64)> = Vec::new();
    let mut covered = space.lo;
    let mut target = space.lo;
    let mut guard = 0usize;
    while covered < space.hi {
        guard += 1;
        if guard > 10_000_000 {
            return Err(Error::Unsupported("cell enumeration did not terminate".into()));
        }
        let (cell, value) = probe(target)?;
        if cell.lo <= covered {
            if cell.hi <= covered {
                // Degenerate or stale cell: step past it.
                target = (covered + nudge).min(space.hi);
                if target <= covered {
                    break;
                }
                continue;
            }
            cells.push((ParamInterval::cell(covered, cell.hi, space.hi)?, value));
            covered = cell.hi;
            target = if covered < space.hi {
                (covered + nudge).min(0.5 * (covered + space.hi))
            } else {
                covered
            };
        } else {
            // A cell narrower than the nudge sits in [covered, cell.lo).
            let mid = 0.5 * (covered + cell.lo);
            if mid <= covered || mid >= cell.lo {
                // Gap below floating-point resolution: absorb it.
                cells.push((ParamInterval::cell(covered, cell.hi, space.hi)?, value));
                covered = cell.hi;
                target = if covered < space.hi {
                    (covered + nudge).min(0.5 * (covered + space.hi))
                } else {
                    covered
                };
            } else {
                target = mid;
            }
        }
    }
    // Equal-valued neighbours are kept apart: callers count feedback sets.
    PiecewiseConstant::from_cells(space, &cells)
}

/// A game: each round exposes a loss over a 1-D space and reveals the
/// feedback-set cell containing whatever point the learner plays.
///
/// Calls for the same round with different points must return cells of one
/// partition.
pub trait SemiBanditEnvironment {
    fn space(&self) -> ParamSpace1D;

    /// Upper bound `H` on the losses.
    fn loss_bound(&self) -> f64;

    fn step(&mut self, rho: f64, round: usize) -> Result<FeedbackObservation>;

    /// The complete loss of a round, when the environment can enumerate it.
    fn round_loss(&mut self, _round: usize) -> Result<Option<PiecewiseConstant>> {
        Ok(None)
    }
}

impl<E: SemiBanditEnvironment + ?Sized> SemiBanditEnvironment for Box<E> {
    fn space(&self) -> ParamSpace1D {
        (**self).space()
    }
    fn loss_bound(&self) -> f64 {
        (**self).loss_bound()
    }
    fn step(&mut self, rho: f64, round: usize) -> Result<FeedbackObservation> {
        (**self).step(rho, round)
    }
    fn round_loss(&mut self, round: usize) -> Result<Option<PiecewiseConstant>> {
        (**self).round_loss(round)
    }
}

/// Divides every loss of the inner environment by its bound.
pub struct Rescaled<E> {
    inner: E,
    h: f64,
}

impl<E: SemiBanditEnvironment> Rescaled<E> {
    pub fn new(inner: E) -> Result<Self> {
        let h = inner.loss_bound();
        check_bound(h)?;
        Ok(Self { inner, h })
    }

    pub fn into_inner(self) -> E {
        self.inner
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: SemiBanditEnvironment> SemiBanditEnvironment for Rescaled<E> {
    fn space(&self) -> ParamSpace1D {
        self.inner.space()
    }
    fn loss_bound(&self) -> f64 {
        1.0
    }
    fn step(&mut self, rho: f64, round: usize) -> Result<FeedbackObservation> {
        self.inner.step(rho, round)?.rescaled(self.h)
    }
    fn round_loss(&mut self, round: usize) -> Result<Option<PiecewiseConstant>> {
        let h = self.h;
        Ok(self.inner.round_loss(round)?.map(|f| f.map_values(|v| v / h)))
    }
}

/// Plays the inner environment on the space enlarged by `r0`, projecting
/// every played point back onto the original space. Boundary cells are
/// stretched to cover the added margins.
pub struct Projected<E> {
    inner: E,
    r0: f64,
    space: ParamSpace1D,
}

impl<E: SemiBanditEnvironment> Projected<E> {
    pub fn new(inner: E, r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(invalid("r0", format!("must be positive, got {r0}")));
        }
        let base = inner.space();
        let space = ParamSpace1D::new(base.lo - r0, base.hi + r0)?;
        Ok(Self { inner, r0, space })
    }

    pub fn margin(&self) -> f64 {
        self.r0
    }

    fn stretch(&self, set: ParamInterval) -> ParamInterval {
        let base = self.inner.space();
        let mut out = set;
        if set.lo <= base.lo {
            out.lo = self.space.lo;
            out.lo_closed = true;
        }
        if set.hi >= base.hi {
            out.hi = self.space.hi;
            out.hi_closed = true;
        }
        out
    }
}

impl<E: SemiBanditEnvironment> SemiBanditEnvironment for Projected<E> {
    fn space(&self) -> ParamSpace1D {
        self.space
    }
    fn loss_bound(&self) -> f64 {
        self.inner.loss_bound()
    }
    fn step(&mut self, rho: f64, round: usize) -> Result<FeedbackObservation> {
        let base = self.inner.space();
        let mut obs = self.inner.step(base.clamp(rho), round)?;
        obs.set = self.stretch(obs.set);
        if let SetLoss::Function(f) = &obs.loss {
            let f = Arc::clone(f);
            obs.loss = SetLoss::Function(Arc::new(move |x| f(base.clamp(x))));
        }
        Ok(obs)
    }
    fn round_loss(&mut self, round: usize) -> Result<Option<PiecewiseConstant>> {
        Ok(match self.inner.round_loss(round)? {
            Some(f) => Some(PiecewiseConstant::new(
                self.space,
                f.breaks().to_vec(),
                f.values().to_vec(),
            )?),
            None => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_invariants() {
        assert!(ParamInterval::half_open(1.0, 0.0).is_err());
        assert!(ParamInterval::half_open(0.5, 0.5).is_err());
        let p = ParamInterval::closed(0.5, 0.5).unwrap();
        assert!(p.contains(0.5));
        let a = ParamInterval::half_open(0.0, 0.5).unwrap();
        assert!(a.contains(0.0) && !a.contains(0.5));
        assert_eq!(a.width(), 0.5);
        assert!(ParamSpace1D::new(1.0, 1.0).is_err());
        assert_eq!(ParamSpace1D::new(0.0, 4.0).unwrap().radius(), 2.0);
    }

    #[test]
    fn utility_to_loss_examples() {
        let l = utility_to_loss(|_| 1.0, 1.0).unwrap();
        assert_eq!(l(0.3), 0.0);
        let l = utility_to_loss(|_| 0.3, 1.0).unwrap();
        assert!((l(0.2) - 0.7).abs() < 1e-15);
        assert!(utility_to_loss(|_| 0.0, 0.0).is_err());
        assert!(utility_to_loss(|_| 0.0, -1.0).is_err());

        // Knapsack: value Σ v_i with H = C gives C − Σ v_i.
        let c = 4.0;
        let l = utility_to_loss(|_| 0.4, c).unwrap();
        assert!((l(0.0) - 3.6).abs() < 1e-12);

        let set = ParamInterval::half_open(0.0, 0.5).unwrap();
        let obs = FeedbackObservation::constant(set, 0.3).utility_to_loss(1.0).unwrap();
        assert_eq!(obs.set, set);
        assert!((obs.loss_at_play - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_losses(|_| 0.5, 1.0).unwrap()(0.1), 0.5);
        assert_eq!(rescale_losses(|_| 3.0, 4.0).unwrap()(0.1), 0.75);
        assert!(rescale_losses(|_| 3.0, 0.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let (space, l) =
            extend_domain_with_projection(ParamSpace1D::unit(), 0.1, |rho| rho).unwrap();
        assert!((space.lo + 0.1).abs() < 1e-15 && (space.hi - 1.1).abs() < 1e-15);
        assert_eq!(l(1.05), 1.0);
        assert_eq!(l(0.5), 0.5);
        assert_eq!(l(-0.05), 0.0);
        assert!(extend_domain_with_projection(ParamSpace1D::unit(), 0.0, |r| r).is_err());
    }

    #[test]
    fn piecewise_constant_cells() {
        let f = PiecewiseConstant::new(ParamSpace1D::unit(), vec![0.25, 0.5], vec![1.0, 2.0, 2.0])
            .unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(0.25), 2.0);
        assert_eq!(f.eval(1.0), 2.0);
        assert_eq!(f.discontinuities(), vec![0.25]);
        let obs = f.observe(0.7);
        assert_eq!(obs.set, ParamInterval::closed(0.5, 1.0).unwrap());
        let cells: Vec<_> = f.cells().collect();
        assert_eq!(PiecewiseConstant::from_cells(ParamSpace1D::unit(), &cells).unwrap(), f);
        assert!(PiecewiseConstant::new(ParamSpace1D::unit(), vec![0.5, 0.25], vec![0.0; 3]).is_err());
    }

    #[test]
    fn probing_recovers_tiny_cells() {
        let truth = PiecewiseConstant::new(
            ParamSpace1D::unit(),
            vec![0.1, 0.1 + 1e-12, 0.6, 0.6 + 3e-11],
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let rec = tile_by_probing(ParamSpace1D::unit(), |rho| {
            let i = truth.cell_index(rho);
            Ok((truth.cell(i), truth.values()[i]))
        })
        .unwrap();
        assert_eq!(rec, truth);
    }

    struct Steps;
    impl SemiBanditEnvironment for Steps {
        fn space(&self) -> ParamSpace1D {
            ParamSpace1D::unit()
        }
        fn loss_bound(&self) -> f64 {
            4.0
        }
        fn step(&mut self, rho: f64, _round: usize) -> Result<FeedbackObservation> {
            let f = PiecewiseConstant::new(self.space(), vec![0.5], vec![1.0, 3.0])?;
            Ok(f.observe(rho))
        }
    }

    #[test]
    fn wrappers() {
        let mut env = Rescaled::new(Steps).unwrap();
        let obs = env.step(0.7, 0).unwrap();
        assert_eq!(obs.loss_at_play, 0.75);
        assert_eq!(env.loss_bound(), 1.0);

        let mut env = Projected::new(Steps, 0.1).unwrap();
        let obs = env.step(1.05, 0).unwrap();
        assert_eq!(obs.loss_at_play, 3.0);
        assert!((obs.set.hi - 1.1).abs() < 1e-15 && obs.set.lo == 0.5);
        assert!(obs.set.contains(1.05));
        let obs = env.step(-0.05, 0).unwrap();
        assert!(obs.set.contains(-0.05) && obs.loss_at_play == 1.0);
    }

    proptest! {
        #[test]
        fn utility_to_loss_is_an_involution(u in 0.0f64..5.0, h in 5.0f64..10.0) {
            let once = utility_to_loss(move |_| u, h).unwrap();
            let twice = utility_to_loss(once, h).unwrap();
            prop_assert!((twice(0.0) - u).abs() <= 1e-12 * h);
        }

        #[test]
        fn rescale_roundtrip(l in 0.0f64..1e6, h in 1e-3f64..1e6) {
            let scaled = rescale_losses(move |_| l, h).unwrap();
            let back = scaled(0.0) * h;
            prop_assert!((back - l).abs() <= 1e-12 * l.max(f64::MIN_POSITIVE));
        }
    }
}
