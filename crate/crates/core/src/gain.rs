//! Impurity functions (Gini impurity, entropy, label variance), the
//! conditional gain of a split, and the smoothness constants exposed as
//! checkable bounds.
//!
//! All logarithms are base 2. The impurity of an empty set is taken as 0,
//! so a degenerate split (everything on one side) has gain 0. The variance
//! here is the ordered-pairwise form `(1/n^2) * sum_{s,s'} (y - y')^2`,
//! which equals twice the conventional population variance; it is computed
//! from the moment triple `(n, sum y, sum y^2)`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::multiset::{ExampleMultiset, Label};
use crate::split::SplitRule;

/// Which gain drives the decision rule. For the variance gain,
/// `half_range` is half the supremum of `|y|`, so labels lie in
/// `[-2*half_range, 2*half_range]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainKind {
    Gini,
    Info,
    Variance { half_range: f64 },
}

impl GainKind {
    /// True when leaves carry the mean label rather than a mode.
    pub fn is_regression(&self) -> bool {
        matches!(self, GainKind::Variance { .. })
    }
}

/// Per-label counts plus the label moment triple, maintained incrementally
/// by [`ExampleMultiset`]. Classification reads the counts; regression
/// reads the moments. `n` is the total count either way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelStats {
    counts: BTreeMap<Label, u64>,
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl LabelStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I: IntoIterator<Item = Label>>(labels: I) -> Self {
        let mut s = Self::new();
        for y in labels {
            s.add(y, 1);
        }
        s
    }

    pub fn add(&mut self, y: Label, by: u64) {
        if by == 0 {
            return;
        }
        *self.counts.entry(y).or_insert(0) += by;
        self.n += by;
        let v = y.numeric();
        self.sum += v * by as f64;
        self.sum_sq += v * v * by as f64;
    }

    pub fn sub(&mut self, y: Label, by: u64) {
        if by == 0 {
            return;
        }
        let c = self.counts.get_mut(&y).expect("label underflow");
        *c -= by;
        if *c == 0 {
            self.counts.remove(&y);
        }
        self.n -= by;
        let v = y.numeric();
        self.sum -= v * by as f64;
        self.sum_sq -= v * v * by as f64;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &BTreeMap<Label, u64> {
        &self.counts
    }

    pub fn count_of(&self, y: &Label) -> u64 {
        self.counts.get(y).copied().unwrap_or(0)
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    pub fn mean(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::EmptySet);
        }
        Ok(self.sum / self.n as f64)
    }

    /// A label of maximum count; ties break to the smallest label.
    pub fn mode(&self) -> Result<Label> {
        let mut best: Option<(Label, u64)> = None;
        for (&y, &c) in &self.counts {
            match best {
                Some((_, bc)) if c <= bc => {}
                _ => best = Some((y, c)),
            }
        }
        best.map(|(y, _)| y).ok_or(Error::EmptySet)
    }
}

/// `x * log2(x)` with the `0 * log2(0) = 0` convention.
#[inline]
pub(crate) fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// `1 - sum_i p_i^2` over the label distribution.
pub fn gini_impurity(stats: &LabelStats) -> Result<f64> {
    let n = stats.n();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let n = n as f64;
    let mut sq = 0.0;
    for &c in stats.counts().values() {
        let p = c as f64 / n;
        sq += p * p;
    }
    Ok(1.0 - sq)
}

/// Shannon entropy of the label distribution, base 2.
pub fn entropy(stats: &LabelStats) -> Result<f64> {
    let n = stats.n();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let n = n as f64;
    let mut h = 0.0;
    for &c in stats.counts().values() {
        let p = c as f64 / n;
        h -= xlog2x(p);
    }
    Ok(h.max(0.0))
}

/// Ordered-pairwise label variance `(1/n^2) sum_{s,s'} (y-y')^2`, computed
/// from moments as `2 * (sum_sq/n - (sum/n)^2)`.
pub fn label_variance(stats: &LabelStats) -> Result<f64> {
    let n = stats.n();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let n = n as f64;
    let mean = stats.sum() / n;
    Ok((2.0 * (stats.sum_sq() / n - mean * mean)).max(0.0))
}

/// Impurity of the given kind; empty sets are the caller's concern.
pub fn impurity(kind: GainKind, stats: &LabelStats) -> Result<f64> {
    match kind {
        GainKind::Gini => gini_impurity(stats),
        GainKind::Info => entropy(stats),
        GainKind::Variance { .. } => label_variance(stats),
    }
}

fn impurity_or_zero(kind: GainKind, stats: &LabelStats) -> Result<f64> {
    if stats.n() == 0 {
        Ok(0.0)
    } else {
        impurity(kind, stats)
    }
}

/// Negative gains at or below this magnitude are floating-point artifacts
/// and clamp to zero; anything worse is an internal-consistency error.
pub(crate) const GAIN_CLAMP_TOL: f64 = 1e-12;

/// Gain from the parent and two child label distributions:
/// `g(S) - (|S0|/|S|) g(S0) - (|S1|/|S|) g(S1)`.
pub(crate) fn gain_from_stats(
    kind: GainKind,
    parent: &LabelStats,
    side_true: &LabelStats,
    side_false: &LabelStats,
) -> Result<f64> {
    let n = parent.n();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let n = n as f64;
    let g = impurity(kind, parent)?;
    let gt = impurity_or_zero(kind, side_true)?;
    let gf = impurity_or_zero(kind, side_false)?;
    let gain = g - (side_true.n() as f64 / n) * gt - (side_false.n() as f64 / n) * gf;
    if gain < -GAIN_CLAMP_TOL {
        return Err(Error::NegativeGain(gain));
    }
    Ok(gain.max(0.0))
}

/// Conditional gain of a split rule on a multiset, evaluated directly by
/// partitioning the label statistics in one pass.
pub fn conditional_gain(kind: GainKind, set: &ExampleMultiset, rule: &SplitRule) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut on_true = LabelStats::new();
    let mut on_false = LabelStats::new();
    for (ex, c) in set.iter() {
        if rule.eval(&ex.x)? {
            on_true.add(ex.y, c);
        } else {
            on_false.add(ex.y, c);
        }
    }
    gain_from_stats(kind, set.label_stats(), &on_true, &on_false)
}

/// Uniform bound on `|G(S, rule) - G(S', rule)|` as a function of the
/// relative edit distance `eta` between `S` and `S'` and of
/// `n = max(|S|, |S'|)`: `48 eta` (Gini), `60 eta log2 n` (entropy),
/// `36 c^2 eta` (variance).
pub fn smoothness_bound(kind: GainKind, eta: f64, n: u64) -> f64 {
    match kind {
        GainKind::Gini => 48.0 * eta,
        GainKind::Info => 60.0 * eta * (n.max(2) as f64).log2(),
        GainKind::Variance { half_range } => 36.0 * half_range * half_range * eta,
    }
}
