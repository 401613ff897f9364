//! Greedy tree construction, resumable one bounded step at a time.
//!
//! Construction of a vertex is a small state machine: run the split
//! search, then (if the rule splits) partition the vertex's multiset into
//! the two child multisets one entry per step. Each child starts life as a
//! leaf placeholder carrying its multiset and its majority/mean label, so
//! a partially built tree is a well-formed (coarser) tree at every step.
//! The delayed rebuilder drains these steps under an operation budget;
//! [`greedy_build`] drains them to completion.

use std::collections::VecDeque;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::multiset::{ExampleMultiset, LabeledExample};
use crate::opcount::OpCounter;
use crate::rule::{Decision, LabelingRule, ThresholdRule};
use crate::split::{SplitRule, SplitSearch};
use crate::tree::{fix_heights_upward, DecisionTree, NodeKind, NodeRef, TreeNode, WeakNodeRef};

enum BuildState {
    Search(SplitSearch),
    Partition {
        split: SplitRule,
        cursor: Option<LabeledExample>,
        left: ExampleMultiset,
        right: ExampleMultiset,
    },
}

/// Suspended construction of one vertex.
pub(crate) struct VertexBuild {
    pub node: NodeRef,
    zeta: u32,
    round: u32,
    state: BuildState,
}

pub(crate) enum TickOutcome {
    Continue,
    /// Vertex finished; child builds (in left-right order) still pending.
    Done(Vec<VertexBuild>),
}

/// Create a vertex for `data`: a leaf placeholder labeled with the rule's
/// majority/mean label, plus the pending build work if the rule may still
/// split it.
pub(crate) fn new_vertex(
    rule: &ThresholdRule,
    data: Rc<ExampleMultiset>,
    parent: Option<WeakNodeRef>,
    zeta: u32,
    round: u32,
    ops: &OpCounter,
) -> Result<(NodeRef, Option<VertexBuild>)> {
    let label = rule.leaf_label(&data)?;
    ops.arith(data.label_stats().counts().len() as u64);
    let node = TreeNode::new_leaf(data.clone(), LabelingRule { label }, parent, round);
    if rule.forces_leaf(data.len(), zeta) {
        return Ok((node, None));
    }
    let search = SplitSearch::new(data, rule.kind, None, ops)?;
    let build = VertexBuild {
        node: node.clone(),
        zeta,
        round,
        state: BuildState::Search(search),
    };
    Ok((node, Some(build)))
}

impl VertexBuild {
    /// Advance by one bounded step (one search tick or one partitioned
    /// entry).
    pub fn tick(&mut self, rule: &ThresholdRule, ops: &OpCounter) -> Result<TickOutcome> {
        match &mut self.state {
            BuildState::Search(search) => {
                if !search.tick(ops)? {
                    return Ok(TickOutcome::Continue);
                }
                match search.result() {
                    Some(c) if c.gain >= rule.alpha => {
                        self.state = BuildState::Partition {
                            split: c.rule,
                            cursor: None,
                            left: ExampleMultiset::new(),
                            right: ExampleMultiset::new(),
                        };
                        Ok(TickOutcome::Continue)
                    }
                    // No proper split or gain below threshold: the
                    // placeholder leaf is already correct.
                    _ => Ok(TickOutcome::Done(Vec::new())),
                }
            }
            BuildState::Partition {
                split,
                cursor,
                left,
                right,
            } => {
                let data = self.node.borrow().data.clone();
                match data.next_entry_after(cursor.as_ref()) {
                    Some((ex, count)) => {
                        ops.map_access(data.distinct_len());
                        ops.cmp(1);
                        let side_left = split.eval(&ex.x)?;
                        let target = if side_left { left } else { right };
                        target.insert(ex.clone(), count);
                        ops.map_access(target.distinct_len());
                        ops.arith(1);
                        *cursor = Some(ex.clone());
                        Ok(TickOutcome::Continue)
                    }
                    None => {
                        ops.map_access(data.distinct_len());
                        if left.is_empty() || right.is_empty() {
                            return Err(Error::ImproperSplit);
                        }
                        let split = *split;
                        let left = std::mem::take(left);
                        let right = std::mem::take(right);
                        self.finish_split(rule, split, left, right, ops)
                    }
                }
            }
        }
    }

    fn finish_split(
        &mut self,
        rule: &ThresholdRule,
        split: SplitRule,
        left: ExampleMultiset,
        right: ExampleMultiset,
        ops: &OpCounter,
    ) -> Result<TickOutcome> {
        let parent = Some(Rc::downgrade(&self.node));
        let (lnode, lbuild) = new_vertex(
            rule,
            Rc::new(left),
            parent.clone(),
            self.zeta - 1,
            self.round,
            ops,
        )?;
        let (rnode, rbuild) = new_vertex(
            rule,
            Rc::new(right),
            parent,
            self.zeta - 1,
            self.round,
            ops,
        )?;
        {
            let mut n = self.node.borrow_mut();
            n.kind = NodeKind::Internal {
                split,
                left: lnode,
                right: rnode,
            };
            n.height = 1;
        }
        fix_heights_upward(&self.node);
        let children = lbuild.into_iter().chain(rbuild).collect();
        Ok(TickOutcome::Done(children))
    }
}

/// Run queued vertex builds to completion, depth-first.
pub(crate) fn drain_builds(
    rule: &ThresholdRule,
    queue: &mut VecDeque<VertexBuild>,
    ops: &OpCounter,
) -> Result<()> {
    while let Some(mut task) = queue.pop_front() {
        loop {
            match task.tick(rule, ops)? {
                TickOutcome::Continue => continue,
                TickOutcome::Done(children) => {
                    for c in children.into_iter().rev() {
                        queue.push_front(c);
                    }
                    break;
                }
            }
        }
    }
    Ok(())
}

/// Build a decision tree for `set`, storing each vertex's example multiset
/// at the vertex. `zeta` is the root's depth budget
/// ([`crate::UNBOUNDED_DEPTH`] for none).
pub fn greedy_build(
    rule: &ThresholdRule,
    set: ExampleMultiset,
    zeta: u32,
    ops: &OpCounter,
) -> Result<DecisionTree> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let dim = set.dim();
    let (root, build) = new_vertex(rule, Rc::new(set), None, zeta, 0, ops)?;
    let mut queue = VecDeque::new();
    queue.extend(build);
    drain_builds(rule, &mut queue, ops)?;
    Ok(DecisionTree::new(root, dim))
}

/// The decision actually taken at a vertex, for consistency checks.
pub fn node_decision(node: &NodeRef) -> Decision {
    let n = node.borrow();
    match &n.kind {
        NodeKind::Leaf { label } => Decision::Leaf(*label),
        NodeKind::Internal { split, .. } => Decision::Split(*split),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::GainKind;
    use crate::multiset::testutil::{ex, set};
    use crate::multiset::Label;
    use crate::split::SplitKind;
    use crate::UNBOUNDED_DEPTH;

    fn gini(alpha: f64) -> ThresholdRule {
        ThresholdRule::new(GainKind::Gini, alpha).unwrap()
    }

    #[test]
    fn pure_set_is_single_leaf() {
        let s = set(&[(&[0.0], 7, 2), (&[3.0], 7, 1)]);
        let t = greedy_build(&gini(0.3), s, UNBOUNDED_DEPTH, &OpCounter::new()).unwrap();
        assert_eq!(t.height(), 0);
        assert_eq!(t.predict(&ex(&[9.0], 0).x).unwrap(), Label::Class(7));
    }

    #[test]
    fn separable_pair_builds_two_pure_leaves() {
        let s = set(&[(&[0.0], 0, 1), (&[1.0], 1, 1)]);
        let t = greedy_build(&gini(0.3), s, UNBOUNDED_DEPTH, &OpCounter::new()).unwrap();
        assert_eq!(t.height(), 1);
        let root = t.root.borrow();
        match &root.kind {
            NodeKind::Internal { split, left, right } => {
                assert_eq!(*split, SplitRule::new(0, 1.0, SplitKind::Lt));
                assert!(left.borrow().is_leaf());
                assert!(right.borrow().is_leaf());
                assert_eq!(left.borrow().data.len(), 1);
                assert_eq!(right.borrow().data.len(), 1);
            }
            _ => panic!("expected internal root"),
        }
        drop(root);
        assert_eq!(t.predict(&ex(&[0.0], 0).x).unwrap(), Label::Class(0));
        assert_eq!(t.predict(&ex(&[1.0], 0).x).unwrap(), Label::Class(1));
    }

    #[test]
    fn children_partition_parent_data() {
        let s = set(&[
            (&[0.0, 5.0], 0, 2),
            (&[1.0, 4.0], 1, 1),
            (&[2.0, 3.0], 0, 3),
            (&[3.0, 2.0], 1, 2),
            (&[4.0, 1.0], 2, 1),
        ]);
        let t = greedy_build(&gini(0.05), s, UNBOUNDED_DEPTH, &OpCounter::new()).unwrap();
        t.visit(|node, _| {
            let n = node.borrow();
            if let NodeKind::Internal { split, left, right } = &n.kind {
                let (l, r) = (left.borrow(), right.borrow());
                assert_eq!(l.data.len() + r.data.len(), n.data.len());
                for (ex, c) in l.data.iter() {
                    assert!(split.eval(&ex.x).unwrap());
                    assert_eq!(n.data.count(ex), c + r.data.count(ex));
                }
                for (ex, _) in r.data.iter() {
                    assert!(!split.eval(&ex.x).unwrap());
                }
            }
        });
    }

    #[test]
    fn depth_budget_limits_height() {
        let s = set(&[
            (&[0.0], 0, 1),
            (&[1.0], 1, 1),
            (&[2.0], 0, 1),
            (&[3.0], 1, 1),
        ]);
        let t0 = greedy_build(&gini(0.01), s.clone(), 0, &OpCounter::new()).unwrap();
        assert_eq!(t0.height(), 0);
        let t1 = greedy_build(&gini(0.01), s.clone(), 1, &OpCounter::new()).unwrap();
        assert!(t1.height() <= 1);
        let t = greedy_build(&gini(0.01), s, UNBOUNDED_DEPTH, &OpCounter::new()).unwrap();
        assert!(t.height() >= 2);
    }

    #[test]
    fn empty_set_is_rejected() {
        let err = greedy_build(
            &gini(0.3),
            ExampleMultiset::new(),
            UNBOUNDED_DEPTH,
            &OpCounter::new(),
        )
        .unwrap_err();
        assert_eq!(err, Error::EmptySet);
    }
}
