//! The fully-dynamic maintainer.
//!
//! Each update request is routed along its root-to-leaf path. Every vertex
//! on the path runs its own lazily created [`DelayedRebuild`] at half the
//! target approximation: the instance snapshots the vertex's frozen
//! multiset through a shared reference and receives every request that
//! reaches the vertex. When an instance completes, its tree atomically
//! replaces the subtree (one pointer swap), all rebuilders below are
//! discarded with the old subtree, and the request stops descending.
//!
//! Vertices too small for the round schedule to make sense are instead
//! rebuilt eagerly on every request that reaches them: constant work per
//! update for a fixed epsilon.

use std::cell::Cell;
use std::rc::Rc;

use crate::delayed::{default_tau, DelayedRebuild, Step};
use crate::error::{Error, Result};
use crate::greedy::greedy_build;
use crate::multiset::{ExampleMultiset, FeatureVector, Label, UpdateRequest};
use crate::opcount::OpCounter;
use crate::rule::{LabelingRule, ThresholdRule};
use crate::split::SplitRule;
use crate::tree::{replace_node, DecisionTree, NodeRef, TreeNode};

/// Conservative multiplier for the eager-rebuild contribution to the
/// per-update bound.
const EAGER_BOUND_FACTOR: u64 = 24;

/// What triggered a subtree replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RebuildCause {
    /// A delayed-rebuild instance completed.
    Instance,
    /// Small-vertex bypass: eager full rebuild.
    Eager,
}

#[derive(Debug, Clone)]
pub struct RebuildEvent {
    /// 1-based index of the update that triggered the replacement.
    pub update_index: u64,
    pub depth: u32,
    /// Active-set size at the replaced vertex after the rebuild.
    pub new_size: u64,
    pub cause: RebuildCause,
}

/// Maintenance report: per-update operation accounting and rebuild log.
#[derive(Debug, Clone, Default)]
pub struct MaintStats {
    pub updates: u64,
    pub max_ops_per_update: u64,
    pub total_ops: u64,
    /// `ops_histogram[b]` counts updates whose charge had bit length `b`.
    pub ops_histogram: Vec<u64>,
    pub rebuilds: Vec<RebuildEvent>,
    pub eager_rebuilds: u64,
    pub instances_created: u64,
    pub instance_completions: u64,
    /// Pull windows (across all instances) that exceeded their budget.
    pub budget_violations: u64,
}

impl MaintStats {
    fn note_update(&mut self, spent: u64) {
        self.updates += 1;
        self.total_ops += spent;
        self.max_ops_per_update = self.max_ops_per_update.max(spent);
        let bucket = (64 - spent.leading_zeros()) as usize;
        if self.ops_histogram.len() <= bucket {
            self.ops_histogram.resize(bucket + 1, 0);
        }
        self.ops_histogram[bucket] += 1;
    }
}

/// Fully-dynamic decision tree over an insert/delete stream.
pub struct TreeMaintainer {
    rule: ThresholdRule,
    epsilon: f64,
    tree: DecisionTree,
    active: ExampleMultiset,
    dim: Option<usize>,
    ops: OpCounter,
    /// Vertices below this size take the eager-rebuild path.
    n_min: u64,
    max_active: u64,
    stats: MaintStats,
    violation_sink: Rc<Cell<u64>>,
    tau_override: Option<u64>,
}

impl std::fmt::Debug for TreeMaintainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TreeMaintainer")
            .field("epsilon", &self.epsilon)
            .field("active", &self.active.len())
            .field("height", &self.tree.height())
            .finish()
    }
}

impl TreeMaintainer {
    /// A maintainer holding the trivial one-leaf tree with the default
    /// label (class 0, or 0.0 for regression rules).
    pub fn new(rule: ThresholdRule, epsilon: f64, ops: OpCounter) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::BadEpsilon);
        }
        let default_label = if rule.kind.is_regression() {
            Label::Real(0.0)
        } else {
            Label::Class(0)
        };
        let root = TreeNode::new_leaf(
            Rc::new(ExampleMultiset::new()),
            LabelingRule {
                label: default_label,
            },
            None,
            0,
        );
        // The round schedule needs at least one pull per instance, so
        // vertices smaller than 2/epsilon bypass instances entirely.
        let n_min = 8u64.max((2.0 / epsilon).ceil() as u64);
        Ok(TreeMaintainer {
            rule,
            epsilon,
            tree: DecisionTree::new(root, None),
            active: ExampleMultiset::new(),
            dim: None,
            ops,
            n_min,
            max_active: 0,
            stats: MaintStats::default(),
            violation_sink: Rc::new(Cell::new(0)),
            tau_override: None,
        })
    }

    /// Force every instance's per-pull budget (fault injection for budget
    /// verification; instances still run to completion but report each
    /// overrun window).
    pub fn set_tau_override(&mut self, tau: Option<u64>) {
        self.tau_override = tau;
    }

    pub fn rule(&self) -> &ThresholdRule {
        &self.rule
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn small_vertex_threshold(&self) -> u64 {
        self.n_min
    }

    pub fn active_size(&self) -> u64 {
        self.active.len()
    }

    pub fn max_active_size(&self) -> u64 {
        self.max_active
    }

    pub fn height(&self) -> u32 {
        self.tree.height()
    }

    /// The maintainer's own copy of the current active set.
    pub fn active_set(&self) -> &ExampleMultiset {
        &self.active
    }

    pub fn tree(&self) -> &DecisionTree {
        &self.tree
    }

    pub fn ops(&self) -> &OpCounter {
        &self.ops
    }

    pub fn stats(&self) -> MaintStats {
        let mut s = self.stats.clone();
        s.budget_violations = self.violation_sink.get();
        s
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Label> {
        if let Some(d) = self.dim {
            if x.dim() != d {
                return Err(Error::DimensionMismatch {
                    got: x.dim(),
                    expected: d,
                });
            }
        }
        self.tree.predict(x)
    }

    /// Per-update worst-case charge this configuration is expected to
    /// respect: one budget window per path vertex plus routing and the
    /// eager-rebuild allowance.
    pub fn per_apply_bound(&self) -> u64 {
        let h = self.tree.height() as u64 + 2;
        let d = self.dim.unwrap_or(1);
        let tau = default_tau(self.max_active.max(2), d, self.epsilon / 2.0);
        let m = self.n_min.max(2);
        let eager = EAGER_BOUND_FACTOR * (d as u64) * m * m.ilog2() as u64;
        h * tau + 64 * (h * d as u64 + 64) + eager
    }

    /// Apply one update request. The mirror active set is updated first,
    /// so a delete of an absent example fails before the tree is touched.
    pub fn apply(&mut self, u: UpdateRequest) -> Result<()> {
        let window_start = self.ops.total();
        let d = u.example.x.dim();
        match self.dim {
            None => {
                self.dim = Some(d);
                self.tree.dim = Some(d);
            }
            Some(dd) if dd != d => {
                return Err(Error::DimensionMismatch {
                    got: d,
                    expected: dd,
                });
            }
            _ => {}
        }
        self.active.apply(&u)?;
        self.ops.map_access(self.active.distinct_len());
        self.max_active = self.max_active.max(self.active.len());

        let path = self.tree.path(&u.example.x)?;
        self.ops.cmp(path.len() as u64);
        for (depth, vertex) in path.iter().enumerate() {
            let depth = depth as u32;
            let n_v = vertex.borrow().data.len();
            if n_v < self.n_min {
                self.eager_rebuild(vertex, depth, &u)?;
                break;
            }
            if let Some(new_tree) = self.feed_instance(vertex, depth, &u)? {
                self.replace_subtree(vertex, new_tree, depth, RebuildCause::Instance);
                self.stats.instance_completions += 1;
                break;
            }
        }

        self.stats.note_update(self.ops.total() - window_start);
        Ok(())
    }

    fn zeta_at(&self, depth: u32) -> u32 {
        self.rule.root_zeta().saturating_sub(depth)
    }

    /// Small-vertex path: rebuild the subtree from its (current) multiset
    /// plus the new request. An emptied vertex collapses back to the
    /// default leaf.
    fn eager_rebuild(&mut self, vertex: &NodeRef, depth: u32, u: &UpdateRequest) -> Result<()> {
        let mut fresh = (*vertex.borrow().data).clone();
        self.ops.arith(fresh.distinct_len() as u64 + 1);
        fresh.apply(u)?;
        self.ops.map_access(fresh.distinct_len());
        let new_root = if fresh.is_empty() {
            let label = if self.rule.kind.is_regression() {
                Label::Real(0.0)
            } else {
                Label::Class(0)
            };
            TreeNode::new_leaf(
                Rc::new(fresh),
                LabelingRule { label },
                None,
                0,
            )
        } else {
            greedy_build(&self.rule, fresh, self.zeta_at(depth), &self.ops)?.root
        };
        self.replace_subtree(vertex, DecisionTree::new(new_root, self.dim), depth, RebuildCause::Eager);
        self.stats.eager_rebuilds += 1;
        Ok(())
    }

    /// Instance path: lazily start the vertex's delayed rebuild over its
    /// frozen multiset at epsilon/2, then drive it until it pulls this
    /// request. Returns the finished tree when the instance completes.
    fn feed_instance(
        &mut self,
        vertex: &NodeRef,
        depth: u32,
        u: &UpdateRequest,
    ) -> Result<Option<DecisionTree>> {
        let mut node = vertex.borrow_mut();
        if node.inst.is_none() {
            let n_v = node.data.len();
            let d = self.dim.unwrap_or(1);
            let tau = self
                .tau_override
                .unwrap_or_else(|| default_tau(n_v, d, self.epsilon / 2.0));
            let mut inst = DelayedRebuild::new(
                self.rule.clone(),
                self.epsilon / 2.0,
                n_v,
                node.data.clone(),
                tau,
                self.zeta_at(depth),
                self.ops.clone(),
            )?;
            inst.set_violation_sink(self.violation_sink.clone());
            node.inst = Some(Box::new(inst));
            self.stats.instances_created += 1;
        }
        let outcome = node.inst.as_mut().unwrap().feed(u.clone())?;
        match outcome {
            Step::NeedsRequest => Ok(None),
            Step::Done(tree) => {
                node.inst = None;
                Ok(Some(tree))
            }
        }
    }

    fn replace_subtree(
        &mut self,
        old: &NodeRef,
        new_tree: DecisionTree,
        depth: u32,
        cause: RebuildCause,
    ) {
        let new_root = new_tree.root;
        let new_size = new_root.borrow().data.len();
        if !replace_node(old, &new_root) {
            self.tree.root = new_root;
        }
        self.stats.rebuilds.push(RebuildEvent {
            update_index: self.stats.updates + 1,
            depth,
            new_size,
            cause,
        });
    }

    /// The decision rules currently on the path of `x` (diagnostics).
    pub fn path_splits(&self, x: &FeatureVector) -> Result<Vec<Option<SplitRule>>> {
        let path = self.tree.path(x)?;
        Ok(path
            .iter()
            .map(|v| match &v.borrow().kind {
                crate::tree::NodeKind::Internal { split, .. } => Some(*split),
                crate::tree::NodeKind::Leaf { .. } => None,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::GainKind;
    use crate::multiset::testutil::ex;

    fn maintainer(alpha: f64, epsilon: f64) -> TreeMaintainer {
        TreeMaintainer::new(
            ThresholdRule::new(GainKind::Gini, alpha).unwrap(),
            epsilon,
            OpCounter::new(),
        )
        .unwrap()
    }

    #[test]
    fn fresh_maintainer_defaults() {
        let m = maintainer(0.3, 0.1);
        assert_eq!(m.active_size(), 0);
        assert_eq!(m.height(), 0);
        assert_eq!(m.predict(&ex(&[4.2], 0).x).unwrap(), Label::Class(0));
    }

    #[test]
    fn bad_epsilon_rejected() {
        let rule = ThresholdRule::new(GainKind::Gini, 0.3).unwrap();
        assert_eq!(
            TreeMaintainer::new(rule.clone(), 0.0, OpCounter::new()).unwrap_err(),
            Error::BadEpsilon
        );
        assert_eq!(
            TreeMaintainer::new(rule, 1.0, OpCounter::new()).unwrap_err(),
            Error::BadEpsilon
        );
    }

    #[test]
    fn insert_then_delete_restores_active_set() {
        let mut m = maintainer(0.3, 0.2);
        for i in 0..6 {
            m.apply(UpdateRequest::ins(ex(&[i as f64], (i % 2) as i64)))
                .unwrap();
        }
        let before: Vec<_> = m
            .active_set()
            .iter()
            .map(|(e, c)| (e.clone(), c))
            .collect();
        m.apply(UpdateRequest::ins(ex(&[100.0], 1))).unwrap();
        m.apply(UpdateRequest::del(ex(&[100.0], 1))).unwrap();
        let after: Vec<_> = m
            .active_set()
            .iter()
            .map(|(e, c)| (e.clone(), c))
            .collect();
        assert_eq!(before, after);
        assert_eq!(m.active_size(), 6);
    }

    #[test]
    fn delete_absent_is_rejected_before_routing() {
        let mut m = maintainer(0.3, 0.2);
        m.apply(UpdateRequest::ins(ex(&[0.0], 0))).unwrap();
        assert_eq!(
            m.apply(UpdateRequest::del(ex(&[1.0], 0))).unwrap_err(),
            Error::DeleteAbsent
        );
        assert_eq!(m.active_size(), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut m = maintainer(0.3, 0.2);
        m.apply(UpdateRequest::ins(ex(&[0.0, 1.0], 0))).unwrap();
        assert!(matches!(
            m.apply(UpdateRequest::ins(ex(&[0.0], 0))).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
        assert!(m.predict(&ex(&[1.0], 0).x).is_err());
    }

    #[test]
    fn separable_stream_learns_the_split() {
        let mut m = maintainer(0.3, 0.2);
        for i in 0..40 {
            let (x, y) = if i % 2 == 0 {
                (-(1.0 + i as f64 / 40.0), 0)
            } else {
                (1.0 + i as f64 / 40.0, 1)
            };
            m.apply(UpdateRequest::ins(ex(&[x], y))).unwrap();
        }
        assert_eq!(m.active_size(), 40);
        assert_eq!(m.predict(&ex(&[-3.0], 0).x).unwrap(), Label::Class(0));
        assert_eq!(m.predict(&ex(&[3.0], 0).x).unwrap(), Label::Class(1));
        assert!(m.height() >= 1);
        assert!(m.stats().rebuilds.len() > 0);
    }

    #[test]
    fn small_vertex_threshold_respects_epsilon() {
        let m = maintainer(0.3, 0.003);
        assert_eq!(m.small_vertex_threshold(), (2.0f64 / 0.003).ceil() as u64);
        let m = maintainer(0.3, 0.5);
        assert_eq!(m.small_vertex_threshold(), 8);
    }
}
