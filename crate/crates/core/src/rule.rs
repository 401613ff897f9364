//! Decision rules: map a multiset to either a split rule or a constant
//! labeling rule.
//!
//! The only rule family implemented is the max-gain threshold rule: split
//! with the argmax split when the best gain reaches `alpha`, otherwise
//! emit a leaf carrying the majority (classification) or mean (regression)
//! label. Pruning by minimum leaf size and by depth budget is folded into
//! the rule itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::GainKind;
use crate::multiset::{ExampleMultiset, Label};
use crate::opcount::OpCounter;
use crate::split::{best_split, SplitRule};

/// Constant-label leaf rule; prediction is O(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingRule {
    pub label: Label,
}

/// Outcome of a decision rule on a multiset.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Split(SplitRule),
    Leaf(LabelingRule),
}

/// Max-gain rule with threshold `alpha`, minimum leaf size `min_leaf`
/// (`0` disables), and an optional depth limit consumed through the
/// per-vertex depth budget `zeta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRule {
    pub kind: GainKind,
    pub alpha: f64,
    pub min_leaf: u64,
    pub max_depth: Option<u32>,
}

impl ThresholdRule {
    pub fn new(kind: GainKind, alpha: f64) -> Result<Self> {
        let ok = match kind {
            GainKind::Gini => alpha > 0.0 && alpha <= 1.0,
            GainKind::Info => alpha > 0.0,
            GainKind::Variance { half_range } => alpha > 0.0 && half_range > 0.0,
        };
        if !ok {
            return Err(Error::BadThreshold);
        }
        Ok(ThresholdRule {
            kind,
            alpha,
            min_leaf: 0,
            max_depth: None,
        })
    }

    pub fn with_min_leaf(mut self, k_star: u64) -> Self {
        self.min_leaf = k_star;
        self
    }

    pub fn with_max_depth(mut self, h_star: Option<u32>) -> Self {
        self.max_depth = h_star;
        self
    }

    /// Depth budget for the root of a tree built by this rule.
    pub fn root_zeta(&self) -> u32 {
        self.max_depth.unwrap_or(crate::UNBOUNDED_DEPTH)
    }

    /// The leaf label this rule assigns: mode or mean.
    pub fn leaf_label(&self, set: &ExampleMultiset) -> Result<Label> {
        if self.kind.is_regression() {
            average_label(set)
        } else {
            majority_label(set)
        }
    }

    /// True when the rule can never split `set` regardless of gains, i.e.
    /// the depth budget is exhausted or the set is at most the pruning
    /// size. Splitting also requires at least two examples.
    pub fn forces_leaf(&self, set_len: u64, zeta: u32) -> bool {
        zeta == 0 || set_len <= self.min_leaf || set_len < 2
    }
}

/// Apply a threshold rule: split iff the depth budget allows it, the set
/// is larger than the pruning size, a proper split exists, and the best
/// gain reaches `alpha`.
pub fn evaluate(
    rule: &ThresholdRule,
    set: &ExampleMultiset,
    zeta: u32,
    ops: &OpCounter,
) -> Result<Decision> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    if rule.forces_leaf(set.len(), zeta) {
        return Ok(Decision::Leaf(LabelingRule {
            label: rule.leaf_label(set)?,
        }));
    }
    match best_split(set, rule.kind, ops)? {
        Some((split, gain)) if gain >= rule.alpha => Ok(Decision::Split(split)),
        _ => Ok(Decision::Leaf(LabelingRule {
            label: rule.leaf_label(set)?,
        })),
    }
}

/// A label of maximum count; ties break to the smallest label.
pub fn majority_label(set: &ExampleMultiset) -> Result<Label> {
    set.label_stats().mode()
}

/// Mean of the labels with multiplicity.
pub fn average_label(set: &ExampleMultiset) -> Result<Label> {
    Ok(Label::Real(set.label_stats().mean()?))
}

/// Balancedness guarantee of a max-gain threshold rule: whenever it
/// splits, each side keeps at least this fraction of the examples.
/// `alpha/16` (Gini), `alpha/(20 log2 n)` (entropy), `alpha/(12 c^2)`
/// (variance), capped at 1/2.
pub fn balancedness_gamma(kind: GainKind, alpha: f64, n: u64) -> f64 {
    let g = match kind {
        GainKind::Gini => alpha / 16.0,
        GainKind::Info => alpha / (20.0 * (n.max(2) as f64).log2()),
        GainKind::Variance { half_range } => alpha / (12.0 * half_range * half_range),
    };
    g.min(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiset::testutil::{rex, set};
    use crate::multiset::ExampleMultiset;
    use crate::split::SplitKind;
    use crate::UNBOUNDED_DEPTH;

    fn gini_rule(alpha: f64) -> ThresholdRule {
        ThresholdRule::new(GainKind::Gini, alpha).unwrap()
    }

    #[test]
    fn pure_set_becomes_leaf() {
        let s = set(&[(&[0.0], 3, 2), (&[1.0], 3, 1)]);
        let d = evaluate(&gini_rule(0.1), &s, UNBOUNDED_DEPTH, &OpCounter::new()).unwrap();
        assert_eq!(
            d,
            Decision::Leaf(LabelingRule {
                label: Label::Class(3)
            })
        );
    }

    #[test]
    fn separable_set_splits_above_threshold() {
        let s = set(&[(&[0.0], 0, 1), (&[1.0], 1, 1)]);
        let d = evaluate(&gini_rule(0.3), &s, UNBOUNDED_DEPTH, &OpCounter::new()).unwrap();
        assert_eq!(d, Decision::Split(SplitRule::new(0, 1.0, SplitKind::Lt)));
    }

    #[test]
    fn exhausted_depth_budget_forces_leaf() {
        let s = set(&[(&[0.0], 0, 1), (&[1.0], 1, 1)]);
        let d = evaluate(&gini_rule(0.3), &s, 0, &OpCounter::new()).unwrap();
        assert!(matches!(d, Decision::Leaf(_)));
    }

    #[test]
    fn min_leaf_pruning_forces_leaf() {
        let s = set(&[(&[0.0], 0, 2), (&[1.0], 1, 2)]);
        let rule = gini_rule(0.3).with_min_leaf(4);
        let d = evaluate(&rule, &s, UNBOUNDED_DEPTH, &OpCounter::new()).unwrap();
        assert!(matches!(d, Decision::Leaf(_)));
    }

    #[test]
    fn majority_and_average_examples() {
        let s = set(&[(&[0.0], 0, 3), (&[1.0], 1, 1)]);
        assert_eq!(majority_label(&s).unwrap(), Label::Class(0));
        let tie = set(&[(&[0.0], 0, 2), (&[1.0], 1, 2)]);
        assert_eq!(majority_label(&tie).unwrap(), Label::Class(0));
        let single = set(&[(&[0.0], 5, 1)]);
        assert_eq!(majority_label(&single).unwrap(), Label::Class(5));

        let mut r = ExampleMultiset::new();
        r.insert(rex(&[0.0], 1.0), 1);
        r.insert(rex(&[1.0], 3.0), 1);
        assert_eq!(average_label(&r).unwrap(), Label::Real(2.0));

        let mut c = ExampleMultiset::new();
        c.insert(rex(&[0.0], 0.25), 5);
        assert_eq!(average_label(&c).unwrap(), Label::Real(0.25));

        let mut w = ExampleMultiset::new();
        w.insert(rex(&[0.0], 0.0), 3);
        w.insert(rex(&[1.0], 2.0), 1);
        assert_eq!(average_label(&w).unwrap(), Label::Real(0.5));

        assert_eq!(
            majority_label(&ExampleMultiset::new()).unwrap_err(),
            Error::EmptySet
        );
    }

    #[test]
    fn gamma_values() {
        assert!((balancedness_gamma(GainKind::Gini, 0.32, 100) - 0.02).abs() < 1e-12);
        assert!((balancedness_gamma(GainKind::Info, 0.4, 1024) - 0.002).abs() < 1e-12);
        assert!(
            (balancedness_gamma(GainKind::Variance { half_range: 1.0 }, 0.12, 100) - 0.01).abs()
                < 1e-12
        );
        // Capped at 1/2.
        assert_eq!(balancedness_gamma(GainKind::Gini, 16.0, 2), 0.5);
    }

    #[test]
    fn threshold_validation() {
        assert!(ThresholdRule::new(GainKind::Gini, 0.0).is_err());
        assert!(ThresholdRule::new(GainKind::Gini, 1.5).is_err());
        assert!(ThresholdRule::new(GainKind::Info, 1.5).is_ok());
        assert!(ThresholdRule::new(GainKind::Variance { half_range: 0.0 }, 0.1).is_err());
    }
}
