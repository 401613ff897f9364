//! Exact maximum-gain axis-split search in `O(d n log n)`.
//!
//! For each feature the search builds per-value counter tables (count,
//! per-label counts, label moments), then sweeps the distinct values in
//! ascending order maintaining cumulative statistics, so every threshold
//! candidate of the `x_j < t` family and every `x_j = t` candidate is
//! scored with O(1) amortized arithmetic per (value, label) cell.
//!
//! The search is a resumable state machine ([`SplitSearch`]): callers that
//! run under an operation budget advance it one bounded tick at a time.
//! [`best_split`] drives it to completion.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{xlog2x, GainKind};
use crate::multiset::{ExampleMultiset, FeatureVector, Label, LabeledExample};
use crate::opcount::OpCounter;
use crate::GAIN_TIE_TOL;

/// Axis-split predicate family: `x_j < t` or `x_j = t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    Lt,
    Eq,
}

impl SplitKind {
    fn rank(self) -> u8 {
        match self {
            SplitKind::Lt => 0,
            SplitKind::Eq => 1,
        }
    }
}

/// An axis split. Examples evaluating to `true` go to the left child.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub threshold: f64,
    pub kind: SplitKind,
}

impl SplitRule {
    pub fn new(feature: usize, threshold: f64, kind: SplitKind) -> Self {
        SplitRule {
            feature,
            threshold,
            kind,
        }
    }

    /// O(1): one feature-value comparison.
    pub fn eval(&self, x: &FeatureVector) -> Result<bool> {
        let v = x.value(self.feature)?;
        Ok(match self.kind {
            SplitKind::Lt => v < self.threshold,
            SplitKind::Eq => v == self.threshold,
        })
    }
}

/// Map key for feature values: total order over non-NaN floats.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A scored candidate split.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub rule: SplitRule,
    pub gain: f64,
}

/// Deterministic preference: larger gain wins; gains within
/// [`GAIN_TIE_TOL`] tie and resolve by (feature, Lt-before-Eq, threshold).
pub(crate) fn candidate_better(new: &Candidate, cur: &Candidate) -> bool {
    if new.gain > cur.gain + GAIN_TIE_TOL {
        return true;
    }
    if new.gain < cur.gain - GAIN_TIE_TOL {
        return false;
    }
    let nk = (new.rule.feature, new.rule.kind.rank(), OrdF64(new.rule.threshold));
    let ck = (cur.rule.feature, cur.rule.kind.rank(), OrdF64(cur.rule.threshold));
    nk < ck
}

/// Per-distinct-value counters: total count, per-label counts (skipped for
/// the variance gain, which needs only moments), and label moments.
#[derive(Debug, Default)]
struct ValueCell {
    count: u64,
    labels: BTreeMap<Label, u64>,
    sum: f64,
    sum_sq: f64,
}

/// Cumulative sweep state over values processed so far (the `< t` side).
#[derive(Debug, Default)]
struct CumState {
    n: u64,
    labels: BTreeMap<Label, u64>,
    /// Gini: sum over labels of (cumulative count)^2.
    n_below: f64,
    /// Gini: sum over labels of (total - cumulative)^2.
    n_above: f64,
    /// Entropy: sum of c*log2(c) over cumulative counts.
    w_below: f64,
    /// Entropy: sum of r*log2(r) over remaining counts.
    w_above: f64,
    sum: f64,
    sum_sq: f64,
}

enum Phase {
    Fill {
        cursor: Option<LabeledExample>,
        table: BTreeMap<OrdF64, ValueCell>,
    },
    Sweep {
        table: BTreeMap<OrdF64, ValueCell>,
        cum: CumState,
    },
    Finished,
}

/// Resumable maximum-gain search over all features (or one feature), both
/// rule kinds, and all observed thresholds. Only proper splits (both sides
/// nonempty) are candidates.
pub(crate) struct SplitSearch {
    data: Rc<ExampleMultiset>,
    kind: GainKind,
    track_labels: bool,
    dim: usize,
    only: Option<usize>,
    feature: usize,
    n: u64,
    parent_imp: f64,
    /// Gini: sum of squared global label counts.
    q_tot: f64,
    /// Entropy: sum of L[y]*log2(L[y]) over global label counts.
    w_tot: f64,
    s1_tot: f64,
    s2_tot: f64,
    phase: Phase,
    best: Option<Candidate>,
}

impl SplitSearch {
    pub fn new(
        data: Rc<ExampleMultiset>,
        kind: GainKind,
        only: Option<usize>,
        ops: &OpCounter,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptySet);
        }
        let dim = data.dim().unwrap_or(0);
        if let Some(j) = only {
            if j >= dim {
                return Err(Error::BadFeatureIndex { index: j, dim });
            }
        }
        let stats = data.label_stats();
        let mut q_tot = 0.0;
        let mut w_tot = 0.0;
        for &c in stats.counts().values() {
            let c = c as f64;
            q_tot += c * c;
            w_tot += xlog2x(c);
            ops.arith(2);
        }
        let parent_imp = crate::gain::impurity(kind, stats)?;
        ops.arith(stats.counts().len() as u64);
        let feature = only.unwrap_or(0);
        Ok(SplitSearch {
            n: data.len(),
            s1_tot: stats.sum(),
            s2_tot: stats.sum_sq(),
            data,
            kind,
            track_labels: !kind.is_regression(),
            dim,
            only,
            feature,
            parent_imp,
            q_tot,
            w_tot,
            phase: Phase::Fill {
                cursor: None,
                table: BTreeMap::new(),
            },
            best: None,
        })
    }


    /// Best candidate found so far (final answer once finished).
    pub fn result(&self) -> Option<Candidate> {
        self.best
    }

    fn consider(&mut self, rule: SplitRule, gain: f64) -> Result<()> {
        // Sweep arithmetic may round a zero gain slightly negative.
        let gain = if gain < 0.0 {
            if gain < -1e-6 {
                return Err(Error::NegativeGain(gain));
            }
            0.0
        } else {
            gain
        };
        let cand = Candidate { rule, gain };
        match &self.best {
            None => self.best = Some(cand),
            Some(cur) => {
                if candidate_better(&cand, cur) {
                    self.best = Some(cand);
                }
            }
        }
        Ok(())
    }

    /// Impurity-weighted two-side gain for the Lt family with `cum` as the
    /// strictly-below (left) side.
    fn lt_gain(&self, cum: &CumState) -> f64 {
        let n = self.n as f64;
        let nl = cum.n as f64;
        let nr = n - nl;
        match self.kind {
            GainKind::Gini => {
                let g_l = 1.0 - cum.n_below / (nl * nl);
                let g_r = 1.0 - cum.n_above / (nr * nr);
                self.parent_imp - (nl / n) * g_l - (nr / n) * g_r
            }
            GainKind::Info => {
                let h_l = nl.log2() - cum.w_below / nl;
                let h_r = nr.log2() - cum.w_above / nr;
                self.parent_imp - (nl / n) * h_l - (nr / n) * h_r
            }
            GainKind::Variance { .. } => {
                let v_l = 2.0 * (cum.sum_sq / nl - (cum.sum / nl) * (cum.sum / nl));
                let rs = self.s1_tot - cum.sum;
                let rq = self.s2_tot - cum.sum_sq;
                let v_r = 2.0 * (rq / nr - (rs / nr) * (rs / nr));
                self.parent_imp - (nl / n) * v_l - (nr / n) * v_r
            }
        }
    }

    /// Gain for `x_j = t` with `cell` as the equal (left) side. Charges
    /// O(labels in cell) for the classification gains.
    fn eq_gain(&self, cell: &ValueCell, ops: &OpCounter) -> f64 {
        let n = self.n as f64;
        let ne = cell.count as f64;
        let nr = n - ne;
        let stats = self.data.label_stats();
        match self.kind {
            GainKind::Gini => {
                let mut q_eq = 0.0;
                let mut q_rest = self.q_tot;
                for (y, &c) in &cell.labels {
                    let c = c as f64;
                    let tot = stats.count_of(y) as f64;
                    q_eq += c * c;
                    q_rest += (tot - c) * (tot - c) - tot * tot;
                    ops.map_access(stats.counts().len());
                    ops.arith(4);
                }
                let g_e = 1.0 - q_eq / (ne * ne);
                let g_r = 1.0 - q_rest / (nr * nr);
                self.parent_imp - (ne / n) * g_e - (nr / n) * g_r
            }
            GainKind::Info => {
                let mut w_eq = 0.0;
                let mut w_rest = self.w_tot;
                for (y, &c) in &cell.labels {
                    let c = c as f64;
                    let tot = stats.count_of(y) as f64;
                    w_eq += xlog2x(c);
                    w_rest += xlog2x(tot - c) - xlog2x(tot);
                    ops.map_access(stats.counts().len());
                    ops.arith(4);
                }
                let h_e = ne.log2() - w_eq / ne;
                let h_r = nr.log2() - w_rest / nr;
                self.parent_imp - (ne / n) * h_e - (nr / n) * h_r
            }
            GainKind::Variance { .. } => {
                let v_e = 2.0 * (cell.sum_sq / ne - (cell.sum / ne) * (cell.sum / ne));
                let rs = self.s1_tot - cell.sum;
                let rq = self.s2_tot - cell.sum_sq;
                let v_r = 2.0 * (rq / nr - (rs / nr) * (rs / nr));
                ops.arith(8);
                self.parent_imp - (ne / n) * v_e - (nr / n) * v_r
            }
        }
    }

    /// Fold a processed value group into the cumulative (below) side.
    fn fold_cell(&self, cum: &mut CumState, cell: &ValueCell, ops: &OpCounter) {
        let stats = self.data.label_stats();
        if self.track_labels {
            for (y, &c) in &cell.labels {
                let tot = stats.count_of(y) as f64;
                let old = *cum.labels.get(y).unwrap_or(&0) as f64;
                let new = old + c as f64;
                cum.n_below += new * new - old * old;
                cum.n_above += (tot - new) * (tot - new) - (tot - old) * (tot - old);
                cum.w_below += xlog2x(new) - xlog2x(old);
                cum.w_above += xlog2x(tot - new) - xlog2x(tot - old);
                *cum.labels.entry(*y).or_insert(0) += c;
                ops.map_access(stats.counts().len());
                ops.map_access(cum.labels.len());
                ops.arith(8);
            }
        }
        cum.n += cell.count;
        cum.sum += cell.sum;
        cum.sum_sq += cell.sum_sq;
        ops.arith(3);
    }

    /// Advance by one bounded step. Returns true when the search is done.
    ///
    /// A step touches at most one multiset entry (fill) or one distinct
    /// value group (sweep), so its charge is O(d + labels-per-group).
    pub fn tick(&mut self, ops: &OpCounter) -> Result<bool> {
        let phase = std::mem::replace(&mut self.phase, Phase::Finished);
        match phase {
            Phase::Finished => Ok(true),
            Phase::Fill { cursor, mut table } => {
                match self.data.next_entry_after(cursor.as_ref()) {
                    Some((ex, count)) => {
                        // O(d) access per element plus the table update.
                        ops.map_access(self.data.distinct_len());
                        ops.cmp(self.dim as u64);
                        let v = ex.x.value(self.feature)?;
                        let y = ex.y;
                        let key = ex.clone();
                        ops.map_access(table.len() + 1);
                        let cell = table.entry(OrdF64(v)).or_default();
                        cell.count += count;
                        cell.sum += y.numeric() * count as f64;
                        cell.sum_sq += y.numeric() * y.numeric() * count as f64;
                        ops.arith(3);
                        if self.track_labels {
                            *cell.labels.entry(y).or_insert(0) += count;
                            ops.map_access(cell.labels.len());
                        }
                        self.phase = Phase::Fill {
                            cursor: Some(key),
                            table,
                        };
                        Ok(false)
                    }
                    None => {
                        ops.map_access(self.data.distinct_len());
                        if table.len() < 2 {
                            // Single distinct value: no proper split here.
                            self.advance_feature();
                        } else {
                            let mut cum = CumState::default();
                            cum.n_above = self.q_tot;
                            cum.w_above = self.w_tot;
                            self.phase = Phase::Sweep { table, cum };
                        }
                        Ok(false)
                    }
                }
            }
            Phase::Sweep { mut table, mut cum } => {
                match table.pop_first() {
                    Some((OrdF64(t), cell)) => {
                        ops.map_access(table.len() + 1);
                        // Lt at threshold t: left side is everything below.
                        if cum.n >= 1 {
                            let gain = self.lt_gain(&cum);
                            ops.arith(10);
                            self.consider(
                                SplitRule::new(self.feature, t, SplitKind::Lt),
                                gain,
                            )?;
                        }
                        // Eq at t: left side is the group itself.
                        if cell.count < self.n {
                            let gain = self.eq_gain(&cell, ops);
                            ops.arith(6);
                            self.consider(
                                SplitRule::new(self.feature, t, SplitKind::Eq),
                                gain,
                            )?;
                        }
                        self.fold_cell(&mut cum, &cell, ops);
                        self.phase = Phase::Sweep { table, cum };
                        Ok(false)
                    }
                    None => {
                        self.advance_feature();
                        Ok(false)
                    }
                }
            }
        }
    }

    fn advance_feature(&mut self) {
        if self.only.is_some() || self.feature + 1 >= self.dim {
            self.phase = Phase::Finished;
        } else {
            self.feature += 1;
            self.phase = Phase::Fill {
                cursor: None,
                table: BTreeMap::new(),
            };
        }
    }
}

/// Exact argmax of the conditional gain over all features, both rule
/// kinds, and all observed thresholds. Returns `None` when no proper split
/// exists (all examples share every feature value).
pub fn best_split(
    set: &ExampleMultiset,
    kind: GainKind,
    ops: &OpCounter,
) -> Result<Option<(SplitRule, f64)>> {
    best_split_impl(set, kind, None, ops)
}

/// [`best_split`] restricted to feature `j`.
pub fn best_split_for_feature(
    set: &ExampleMultiset,
    j: usize,
    kind: GainKind,
    ops: &OpCounter,
) -> Result<Option<(SplitRule, f64)>> {
    best_split_impl(set, kind, Some(j), ops)
}

fn best_split_impl(
    set: &ExampleMultiset,
    kind: GainKind,
    only: Option<usize>,
    ops: &OpCounter,
) -> Result<Option<(SplitRule, f64)>> {
    let mut search = SplitSearch::new(Rc::new(set.clone()), kind, only, ops)?;
    while !search.tick(ops)? {}
    Ok(search.result().map(|c| (c.rule, c.gain)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiset::testutil::{ex, rex, set};

    #[test]
    fn separating_pair_prefers_lt_on_tie() {
        let s = set(&[(&[0.0], 0, 1), (&[1.0], 1, 1)]);
        let (rule, gain) = best_split(&s, GainKind::Gini, &OpCounter::new())
            .unwrap()
            .unwrap();
        assert_eq!(rule, SplitRule::new(0, 1.0, SplitKind::Lt));
        assert!((gain - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_examples_have_no_proper_split() {
        let s = set(&[(&[2.0, 3.0], 0, 5), (&[2.0, 3.0], 1, 2)]);
        assert!(best_split(&s, GainKind::Gini, &OpCounter::new())
            .unwrap()
            .is_none());
        assert_eq!(
            best_split(&crate::multiset::ExampleMultiset::new(), GainKind::Gini, &OpCounter::new())
                .unwrap_err(),
            Error::EmptySet
        );
    }

    #[test]
    fn per_feature_sweep_example() {
        // Values (1,1,2,2) with labels (0,0,1,1): threshold 2 separates.
        let s = set(&[(&[1.0], 0, 2), (&[2.0], 1, 2)]);
        let (rule, gain) = best_split_for_feature(&s, 0, GainKind::Gini, &OpCounter::new())
            .unwrap()
            .unwrap();
        assert_eq!(rule.feature, 0);
        assert_eq!(rule.threshold, 2.0);
        assert_eq!(rule.kind, SplitKind::Lt);
        assert!((gain - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_improper_but_other_column_splits() {
        let s = set(&[(&[7.0, 0.0], 0, 3), (&[7.0, 1.0], 1, 3)]);
        assert!(
            best_split_for_feature(&s, 0, GainKind::Gini, &OpCounter::new())
                .unwrap()
                .is_none()
        );
        let (rule, _) = best_split(&s, GainKind::Gini, &OpCounter::new())
            .unwrap()
            .unwrap();
        assert_eq!(rule.feature, 1);
    }

    #[test]
    fn bad_feature_index() {
        let s = set(&[(&[0.0], 0, 1)]);
        assert_eq!(
            best_split_for_feature(&s, 3, GainKind::Gini, &OpCounter::new()).unwrap_err(),
            Error::BadFeatureIndex { index: 3, dim: 1 }
        );
    }

    #[test]
    fn variance_split_on_regression_labels() {
        let mut s = crate::multiset::ExampleMultiset::new();
        s.insert(rex(&[0.0], -1.0), 3);
        s.insert(rex(&[1.0], 1.0), 3);
        let kind = GainKind::Variance { half_range: 0.5 };
        let (rule, gain) = best_split(&s, kind, &OpCounter::new()).unwrap().unwrap();
        assert_eq!(rule, SplitRule::new(0, 1.0, SplitKind::Lt));
        // Parent pairwise variance: 2*(1 - 0) = 2; children pure.
        assert!((gain - 2.0).abs() < 1e-9);
    }

    #[test]
    fn eq_split_beats_lt_when_strictly_better() {
        // Middle value has its own label: only Eq isolates it.
        let s = set(&[(&[0.0], 0, 2), (&[1.0], 1, 2), (&[2.0], 0, 2)]);
        let (rule, gain) = best_split(&s, GainKind::Gini, &OpCounter::new())
            .unwrap()
            .unwrap();
        assert_eq!(rule, SplitRule::new(0, 1.0, SplitKind::Eq));
        let direct = crate::gain::conditional_gain(GainKind::Gini, &s, &rule).unwrap();
        assert!((gain - direct).abs() < 1e-12);
    }

    #[test]
    fn sweep_gain_matches_direct_evaluation() {
        let s = set(&[
            (&[0.5, 2.0], 0, 1),
            (&[1.5, 1.0], 1, 2),
            (&[2.5, 0.0], 0, 1),
            (&[3.5, 2.0], 2, 1),
            (&[1.5, 3.0], 2, 1),
        ]);
        for kind in [GainKind::Gini, GainKind::Info] {
            let (rule, gain) = best_split(&s, kind, &OpCounter::new()).unwrap().unwrap();
            let direct = crate::gain::conditional_gain(kind, &s, &rule).unwrap();
            assert!(
                (gain - direct).abs() < 1e-9,
                "{kind:?}: sweep {gain} vs direct {direct}"
            );
        }
        let _ = ex; // testutil shared import
    }
}
