//! Independent brute-force reference implementations and invariant
//! checkers, used as test oracles for the library and by the CLI's
//! `verify` command.
//!
//! The checkers never read the multisets stored inside tree vertices:
//! they recompute every vertex's subset by routing the given active set
//! through the tree's split rules. The brute-force split search evaluates
//! [`conditional_gain`] directly on every candidate, with no shared
//! machinery with the sweep-based search it validates.

use std::collections::BTreeMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::gain::{conditional_gain, GainKind};
use crate::multiset::{ExampleMultiset, Label};
use crate::rule::{LabelingRule, ThresholdRule};
use crate::split::{SplitKind, SplitRule};
use crate::tree::{DecisionTree, NodeKind, NodeRef, TreeNode};
use crate::GAIN_TIE_TOL;

/// The feasibility targets `(alpha, beta)` plus everything needed to
/// derive the matching approximation parameter.
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityParams {
    pub alpha: f64,
    pub beta: f64,
    pub kind: GainKind,
    /// Declared maximum active-set size; the entropy-gain epsilon depends
    /// on it, so it is a stream parameter rather than an observation.
    pub n_max: u64,
}

impl FeasibilityParams {
    /// The approximation parameter under which an approximate tree is
    /// guaranteed feasible at `(alpha, beta)`: `min(alpha,beta)/100`
    /// (Gini), `min(alpha,beta)/(130 log2 n_max)` (entropy),
    /// `min(alpha,beta)/(80 c^2)` (variance).
    pub fn derived_epsilon(&self) -> f64 {
        let m = self.alpha.min(self.beta);
        match self.kind {
            GainKind::Gini => m / 100.0,
            GainKind::Info => m / (130.0 * (self.n_max.max(2) as f64).log2()),
            GainKind::Variance { half_range } => m / (80.0 * half_range * half_range),
        }
    }
}

/// Which feasibility condition a vertex violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Max gain is zero but the vertex is internal.
    LeafRequired,
    /// Max gain reaches alpha but the vertex is a leaf.
    InternalRequired,
    /// The chosen split's gain trails the maximum by more than beta.
    NearOptimalSplit,
    /// A leaf's label is not a mode / the mean.
    LeafLabel,
    /// Gain-approximation slack exceeded.
    GainApprox,
    /// A child kept less than the guaranteed fraction of examples.
    ChildFraction,
    /// Tree height exceeds the balancedness bound.
    HeightBound,
}

#[derive(Debug, Clone)]
pub struct Violation {
    /// Root-to-vertex directions (0 = left, 1 = right).
    pub path: Vec<u8>,
    pub condition: Condition,
    pub detail: String,
}

/// Exhaustive `O(d n^2)` argmax over every (feature, observed threshold,
/// kind), evaluating the conditional gain directly. Ties resolve in
/// (feature, Lt-before-Eq, threshold) order, like the production search.
pub fn brute_force_best_split(
    set: &ExampleMultiset,
    kind: GainKind,
) -> Result<Option<(SplitRule, f64)>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let d = set.dim().unwrap_or(0);
    let n = set.len();
    let mut best: Option<(SplitRule, f64)> = None;
    for j in 0..d {
        let mut values: Vec<f64> = set
            .iter()
            .map(|(ex, _)| ex.x.value(j).unwrap())
            .collect();
        values.sort_by(|a, b| a.total_cmp(b));
        values.dedup_by(|a, b| a.total_cmp(b).is_eq());
        // Candidate order matches the tie-break order, so keeping the
        // first among tied gains yields the lexicographically least rule.
        for split_kind in [SplitKind::Lt, SplitKind::Eq] {
            for &t in &values {
                let rule = SplitRule::new(j, t, split_kind);
                let mut n_true = 0u64;
                for (ex, c) in set.iter() {
                    if rule.eval(&ex.x)? {
                        n_true += c;
                    }
                }
                if n_true == 0 || n_true == n {
                    continue;
                }
                let gain = conditional_gain(kind, set, &rule)?;
                match &best {
                    Some((_, bg)) if gain <= bg + GAIN_TIE_TOL => {}
                    _ => best = Some((rule, gain)),
                }
            }
        }
    }
    Ok(best)
}

/// Maximum gain over the candidate family, with "no proper split" read as
/// zero (every split is degenerate, so every gain is zero).
fn brute_max_gain(set: &ExampleMultiset, kind: GainKind) -> Result<f64> {
    Ok(brute_force_best_split(set, kind)?
        .map(|(_, g)| g)
        .unwrap_or(0.0))
}

fn mode_counts(set: &ExampleMultiset) -> BTreeMap<Label, u64> {
    let mut counts = BTreeMap::new();
    for (ex, c) in set.iter() {
        *counts.entry(ex.y).or_insert(0u64) += c;
    }
    counts
}

fn mean_label(set: &ExampleMultiset) -> f64 {
    let mut sum = 0.0;
    for (ex, c) in set.iter() {
        sum += ex.y.numeric() * c as f64;
    }
    sum / set.len() as f64
}

fn split_set(set: &ExampleMultiset, rule: &SplitRule) -> Result<(ExampleMultiset, ExampleMultiset)> {
    let mut on_true = ExampleMultiset::new();
    let mut on_false = ExampleMultiset::new();
    for (ex, c) in set.iter() {
        if rule.eval(&ex.x)? {
            on_true.insert(ex.clone(), c);
        } else {
            on_false.insert(ex.clone(), c);
        }
    }
    Ok((on_true, on_false))
}

/// Walk a tree together with the recomputed vertex subsets of `set`.
/// Vertices whose recomputed subset is empty are skipped (their
/// conditions are vacuous).
fn walk_with_sets<F: FnMut(&NodeRef, &ExampleMultiset, &[u8]) -> Result<()>>(
    tree: &DecisionTree,
    set: &ExampleMultiset,
    f: &mut F,
) -> Result<()> {
    fn rec<F: FnMut(&NodeRef, &ExampleMultiset, &[u8]) -> Result<()>>(
        node: &NodeRef,
        set: &ExampleMultiset,
        path: &mut Vec<u8>,
        f: &mut F,
    ) -> Result<()> {
        if set.is_empty() {
            return Ok(());
        }
        f(node, set, path)?;
        let kind = node.borrow().kind.clone();
        if let NodeKind::Internal { split, left, right } = kind {
            let (s_l, s_r) = split_set(set, &split)?;
            path.push(0);
            rec(&left, &s_l, path, f)?;
            path.pop();
            path.push(1);
            rec(&right, &s_r, path, f)?;
            path.pop();
        }
        Ok(())
    }
    rec(&tree.root, set, &mut Vec::new(), f)
}

/// Check the three feasibility conditions at every vertex reached by
/// `set`: (1) zero max gain forces a leaf and max gain at least alpha
/// forces an internal vertex, (2) an internal vertex's split trails the
/// maximum gain by at most beta, (3) a leaf's label is a mode (or the
/// mean, within 1e-9).
pub fn check_feasibility(
    tree: &DecisionTree,
    set: &ExampleMultiset,
    params: &FeasibilityParams,
) -> Result<Vec<Violation>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut violations = Vec::new();
    walk_with_sets(tree, set, &mut |node, s, path| {
        let max_gain = brute_max_gain(s, params.kind)?;
        let n = node.borrow();
        match &n.kind {
            NodeKind::Internal { split, .. } => {
                if max_gain <= 0.0 {
                    violations.push(Violation {
                        path: path.to_vec(),
                        condition: Condition::LeafRequired,
                        detail: format!("internal vertex with zero max gain over {} examples", s.len()),
                    });
                }
                let got = conditional_gain(params.kind, s, split)?;
                if got < max_gain - params.beta - 1e-9 {
                    violations.push(Violation {
                        path: path.to_vec(),
                        condition: Condition::NearOptimalSplit,
                        detail: format!(
                            "split gain {got:.6} vs max {max_gain:.6}, beta {}",
                            params.beta
                        ),
                    });
                }
            }
            NodeKind::Leaf { label } => {
                if max_gain >= params.alpha {
                    violations.push(Violation {
                        path: path.to_vec(),
                        condition: Condition::InternalRequired,
                        detail: format!("leaf with max gain {max_gain:.6} >= alpha {}", params.alpha),
                    });
                }
                if params.kind.is_regression() {
                    let mean = mean_label(s);
                    if (label.label.numeric() - mean).abs() > 1e-9 {
                        violations.push(Violation {
                            path: path.to_vec(),
                            condition: Condition::LeafLabel,
                            detail: format!("leaf label {} vs mean {mean}", label.label.numeric()),
                        });
                    }
                } else {
                    let counts = mode_counts(s);
                    let max_count = counts.values().copied().max().unwrap_or(0);
                    if counts.get(&label.label).copied().unwrap_or(0) != max_count {
                        violations.push(Violation {
                            path: path.to_vec(),
                            condition: Condition::LeafLabel,
                            detail: format!("leaf label {:?} is not a mode", label.label),
                        });
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok(violations)
}

/// Check the gain-approximation slack at every internal vertex:
/// `G(S_v, split_v) >= maxgain(S_v) - 96 eps` (Gini),
/// `- 120 eps log2 |S_v|` (entropy), `- 72 c^2 eps` (variance).
pub fn check_gain_approx(
    tree: &DecisionTree,
    set: &ExampleMultiset,
    kind: GainKind,
    epsilon: f64,
) -> Result<Vec<Violation>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut violations = Vec::new();
    walk_with_sets(tree, set, &mut |node, s, path| {
        let n = node.borrow();
        if let NodeKind::Internal { split, .. } = &n.kind {
            let slack = match kind {
                GainKind::Gini => 96.0 * epsilon,
                GainKind::Info => 120.0 * epsilon * (s.len().max(2) as f64).log2(),
                GainKind::Variance { half_range } => 72.0 * half_range * half_range * epsilon,
            };
            let max_gain = brute_max_gain(s, kind)?;
            let got = conditional_gain(kind, s, split)?;
            if got < max_gain - slack - 1e-9 {
                violations.push(Violation {
                    path: path.to_vec(),
                    condition: Condition::GainApprox,
                    detail: format!("gain {got:.6} vs max {max_gain:.6}, slack {slack:.6}"),
                });
            }
        }
        Ok(())
    })?;
    Ok(violations)
}

/// Check the balancedness consequences: every child keeps at least
/// `(gamma - 2 eps)` of its parent's examples, and the height respects
/// the implied logarithmic bound.
pub fn check_height(
    tree: &DecisionTree,
    set: &ExampleMultiset,
    gamma: f64,
    epsilon: f64,
) -> Result<Vec<Violation>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    if gamma <= 2.0 * epsilon {
        return Err(Error::BadEpsilon);
    }
    let shrink = gamma - 2.0 * epsilon;
    let mut violations = Vec::new();
    walk_with_sets(tree, set, &mut |node, s, path| {
        let n = node.borrow();
        if let NodeKind::Internal { split, .. } = &n.kind {
            let (l, r) = split_set(s, split)?;
            let min_side = l.len().min(r.len()) as f64;
            if min_side + 1e-9 < shrink * s.len() as f64 {
                violations.push(Violation {
                    path: path.to_vec(),
                    condition: Condition::ChildFraction,
                    detail: format!(
                        "min child {} of {} below fraction {shrink:.6}",
                        min_side,
                        s.len()
                    ),
                });
            }
        }
        Ok(())
    })?;
    let h_bound = (set.len().max(2) as f64).ln() / (1.0 / (1.0 - shrink)).ln() + 1.0;
    if (tree.height() as f64) > h_bound + 1e-9 {
        violations.push(Violation {
            path: Vec::new(),
            condition: Condition::HeightBound,
            detail: format!("height {} exceeds bound {h_bound:.3}", tree.height()),
        });
    }
    Ok(violations)
}

/// Direct recursive greedy construction with no suspension machinery and
/// no shared code with the production builder: decisions come from the
/// brute-force search and hand-rolled mode/mean computation.
pub fn reference_greedy(
    rule: &ThresholdRule,
    set: &ExampleMultiset,
    zeta: u32,
) -> Result<DecisionTree> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let dim = set.dim();

    fn leaf_label(rule: &ThresholdRule, set: &ExampleMultiset) -> Label {
        if rule.kind.is_regression() {
            Label::Real(mean_label(set))
        } else {
            let counts = mode_counts(set);
            let max = counts.values().copied().max().unwrap();
            *counts.iter().find(|(_, &c)| c == max).unwrap().0
        }
    }

    fn rec(rule: &ThresholdRule, set: ExampleMultiset, zeta: u32) -> Result<NodeRef> {
        let label = leaf_label(rule, &set);
        let leaf_forced = zeta == 0 || set.len() <= rule.min_leaf || set.len() < 2;
        let decision = if leaf_forced {
            None
        } else {
            match brute_force_best_split(&set, rule.kind)? {
                Some((split, gain)) if gain >= rule.alpha => Some(split),
                _ => None,
            }
        };
        match decision {
            None => Ok(TreeNode::new_leaf(
                Rc::new(set),
                LabelingRule { label },
                None,
                0,
            )),
            Some(split) => {
                let (s_l, s_r) = split_set(&set, &split)?;
                if s_l.is_empty() || s_r.is_empty() {
                    return Err(Error::ImproperSplit);
                }
                let node = TreeNode::new_leaf(Rc::new(set), LabelingRule { label }, None, 0);
                let left = rec(rule, s_l, zeta - 1)?;
                let right = rec(rule, s_r, zeta - 1)?;
                left.borrow_mut().parent = Some(Rc::downgrade(&node));
                right.borrow_mut().parent = Some(Rc::downgrade(&node));
                let h = 1 + left.borrow().height.max(right.borrow().height);
                {
                    let mut n = node.borrow_mut();
                    n.kind = NodeKind::Internal { split, left, right };
                    n.height = h;
                }
                Ok(node)
            }
        }
    }

    let root = rec(rule, set.clone(), zeta)?;
    Ok(DecisionTree::new(root, dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiset::testutil::{ex, set};
    use crate::opcount::OpCounter;
    use crate::split::best_split;
    use crate::UNBOUNDED_DEPTH;

    #[test]
    fn brute_force_matches_sweep_on_fixture() {
        let s = set(&[
            (&[0.0, 1.0], 0, 2),
            (&[1.0, 0.0], 1, 1),
            (&[2.0, 2.0], 0, 1),
            (&[3.0, 1.0], 1, 3),
        ]);
        for kind in [GainKind::Gini, GainKind::Info] {
            let a = brute_force_best_split(&s, kind).unwrap().unwrap();
            let b = best_split(&s, kind, &OpCounter::new()).unwrap().unwrap();
            assert_eq!(a.0, b.0, "{kind:?}");
            assert!((a.1 - b.1).abs() < 1e-9, "{kind:?}: {} vs {}", a.1, b.1);
        }
    }

    #[test]
    fn pure_set_has_zero_gain_everywhere() {
        let s = set(&[(&[0.0], 1, 2), (&[1.0], 1, 3)]);
        let best = brute_force_best_split(&s, GainKind::Gini).unwrap().unwrap();
        assert!(best.1.abs() < 1e-12);
    }

    #[test]
    fn no_proper_split_detected() {
        let s = set(&[(&[5.0], 0, 3), (&[5.0], 1, 4)]);
        assert!(brute_force_best_split(&s, GainKind::Gini)
            .unwrap()
            .is_none());
    }

    #[test]
    fn feasibility_rejects_leaf_with_large_gain() {
        // A single leaf over a separable set: max gain 0.5 >= alpha.
        let s = set(&[(&[0.0], 0, 4), (&[1.0], 1, 4)]);
        let root = TreeNode::new_leaf(
            Rc::new(s.clone()),
            LabelingRule {
                label: Label::Class(0),
            },
            None,
            0,
        );
        let tree = DecisionTree::new(root, Some(1));
        let params = FeasibilityParams {
            alpha: 0.3,
            beta: 0.3,
            kind: GainKind::Gini,
            n_max: 64,
        };
        let v = check_feasibility(&tree, &s, &params).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].condition, Condition::InternalRequired);
    }

    #[test]
    fn feasibility_rejects_suboptimal_split_and_bad_label() {
        // Internal root splitting on a useless feature; left leaf label
        // is not a mode of its subset.
        let s = set(&[
            (&[0.0, 0.0], 0, 4),
            (&[0.0, 1.0], 1, 4),
            (&[1.0, 0.0], 0, 4),
            (&[1.0, 1.0], 1, 4),
        ]);
        let root = TreeNode::new_leaf(
            Rc::new(s.clone()),
            LabelingRule {
                label: Label::Class(0),
            },
            None,
            0,
        );
        let left = TreeNode::new_leaf(
            Rc::new(ExampleMultiset::new()),
            LabelingRule {
                label: Label::Class(7),
            },
            Some(Rc::downgrade(&root)),
            0,
        );
        let right = TreeNode::new_leaf(
            Rc::new(ExampleMultiset::new()),
            LabelingRule {
                label: Label::Class(1),
            },
            Some(Rc::downgrade(&root)),
            0,
        );
        {
            let mut r = root.borrow_mut();
            r.kind = NodeKind::Internal {
                // Splitting on feature 0 has zero gain; feature 1 would
                // separate perfectly.
                split: SplitRule::new(0, 1.0, SplitKind::Lt),
                left,
                right,
            };
            r.height = 1;
        }
        let tree = DecisionTree::new(root, Some(2));
        let params = FeasibilityParams {
            alpha: 0.3,
            beta: 0.3,
            kind: GainKind::Gini,
            n_max: 64,
        };
        let v = check_feasibility(&tree, &s, &params).unwrap();
        let conds: Vec<_> = v.iter().map(|x| x.condition).collect();
        assert!(conds.contains(&Condition::NearOptimalSplit), "{conds:?}");
        assert!(conds.contains(&Condition::LeafLabel), "{conds:?}");
    }

    #[test]
    fn height_check_rejects_unbalanced_chain() {
        // Chain peeling one example per level.
        let s = set(&[
            (&[0.0], 0, 1),
            (&[1.0], 1, 1),
            (&[2.0], 0, 1),
            (&[3.0], 1, 1),
            (&[4.0], 0, 1),
            (&[5.0], 1, 1),
            (&[6.0], 0, 1),
            (&[7.0], 1, 1),
        ]);
        let rule = ThresholdRule::new(GainKind::Gini, 0.01).unwrap();
        let tree = reference_greedy(&rule, &s, UNBOUNDED_DEPTH).unwrap();
        // gamma chosen large enough that one-example peels must violate.
        let v = check_height(&tree, &s, 0.45, 0.01).unwrap();
        assert!(!v.is_empty());
    }

    #[test]
    fn reference_greedy_two_point_trace() {
        let s = set(&[(&[0.0], 0, 1), (&[1.0], 1, 1)]);
        let rule = ThresholdRule::new(GainKind::Gini, 0.3).unwrap();
        let t = reference_greedy(&rule, &s, UNBOUNDED_DEPTH).unwrap();
        assert_eq!(t.height(), 1);
        assert_eq!(t.predict(&ex(&[0.0], 0).x).unwrap(), Label::Class(0));
        assert_eq!(t.predict(&ex(&[1.0], 0).x).unwrap(), Label::Class(1));
        let t0 = reference_greedy(&rule, &s, 1).unwrap();
        assert!(t0.height() <= 1);
        let tp = reference_greedy(
            &rule,
            &set(&[(&[0.0], 3, 2), (&[9.0], 3, 1)]),
            UNBOUNDED_DEPTH,
        )
        .unwrap();
        assert_eq!(tp.height(), 0);
    }
}
