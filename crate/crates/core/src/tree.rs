//! Pointer-linked decision trees.
//!
//! Every vertex stores the multiset it was built from, its subtree height,
//! and the per-round instrumentation counters used by the delayed
//! rebuilder and the verification oracles. Vertices also carry the
//! per-vertex rebuilder slot used by the fully-dynamic maintainer, so
//! discarding a subtree automatically discards the rebuilders running
//! below it.

use std::cell::RefCell;
use std::rc::{Rc, Weak};

use serde::{Deserialize, Serialize};

use crate::delayed::DelayedRebuild;
use crate::error::{Error, Result};
use crate::multiset::{ExampleMultiset, FeatureVector, Label};
use crate::rule::LabelingRule;
use crate::split::SplitRule;

pub type NodeRef = Rc<RefCell<TreeNode>>;
pub type WeakNodeRef = Weak<RefCell<TreeNode>>;

#[derive(Debug, Clone)]
pub enum NodeKind {
    Leaf {
        label: LabelingRule,
    },
    Internal {
        split: SplitRule,
        left: NodeRef,
        right: NodeRef,
    },
}

/// One tree vertex. `data` holds exactly the examples that reached this
/// vertex when its subtree was last (re)built; between rebuilds of an
/// outer tree it is never mutated, so rebuilders can snapshot it by
/// reference.
pub struct TreeNode {
    pub kind: NodeKind,
    pub parent: Option<WeakNodeRef>,
    pub data: Rc<ExampleMultiset>,
    /// Height of the subtree rooted here.
    pub height: u32,
    /// |data| when this vertex was created.
    pub n_at_creation: u64,
    /// Round index at which this vertex was created (0 = initial build).
    pub created_round: u32,
    /// Requests that reached this vertex since creation.
    pub c_accum: u64,
    /// Round stamp for the lazily reset per-round counters below.
    pub stamp: u32,
    /// Requests that reached this vertex in the stamped round.
    pub delta: u64,
    /// |data| snapshot taken at the first touch of the stamped round.
    pub n_hat: u64,
    /// Marked for rebuild in the stamped round.
    pub marked: bool,
    /// Per-vertex delayed rebuilder (outer trees only).
    pub inst: Option<Box<DelayedRebuild>>,
}

impl std::fmt::Debug for TreeNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TreeNode")
            .field("kind", &self.kind)
            .field("size", &self.data.len())
            .field("height", &self.height)
            .field("created_round", &self.created_round)
            .finish()
    }
}

impl TreeNode {
    /// Fresh leaf node. The label is the caller's (typically the rule's
    /// majority/mean of `data`).
    pub fn new_leaf(
        data: Rc<ExampleMultiset>,
        label: LabelingRule,
        parent: Option<WeakNodeRef>,
        created_round: u32,
    ) -> NodeRef {
        let n = data.len();
        Rc::new(RefCell::new(TreeNode {
            kind: NodeKind::Leaf { label },
            parent,
            data,
            height: 0,
            n_at_creation: n,
            created_round,
            c_accum: 0,
            stamp: 0,
            delta: 0,
            n_hat: n,
            marked: false,
            inst: None,
        }))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    /// Child the unlabeled example descends to, if internal.
    pub fn route(&self, x: &FeatureVector) -> Result<Option<NodeRef>> {
        match &self.kind {
            NodeKind::Leaf { .. } => Ok(None),
            NodeKind::Internal { split, left, right } => {
                if split.eval(x)? {
                    Ok(Some(left.clone()))
                } else {
                    Ok(Some(right.clone()))
                }
            }
        }
    }
}

/// Recompute heights from `node` up to the root after its subtree
/// changed; stops as soon as an ancestor's height is already correct.
pub(crate) fn fix_heights_upward(node: &NodeRef) {
    let mut cur = node.clone();
    loop {
        let parent = {
            let n = cur.borrow();
            n.parent.as_ref().and_then(|w| w.upgrade())
        };
        match parent {
            None => return,
            Some(p) => {
                let new_h = {
                    let pb = p.borrow();
                    match &pb.kind {
                        NodeKind::Leaf { .. } => 0,
                        NodeKind::Internal { left, right, .. } => {
                            1 + left.borrow().height.max(right.borrow().height)
                        }
                    }
                };
                if p.borrow().height == new_h {
                    return;
                }
                p.borrow_mut().height = new_h;
                cur = p;
            }
        }
    }
}

/// Swap `new` into `old`'s position under `old`'s parent. Returns false
/// when `old` is a root (no parent); the caller then swaps its own root
/// pointer. `new` adopts the parent link either way.
pub(crate) fn replace_node(old: &NodeRef, new: &NodeRef) -> bool {
    let parent_weak = old.borrow().parent.clone();
    new.borrow_mut().parent = parent_weak.clone();
    let Some(parent) = parent_weak.and_then(|w| w.upgrade()) else {
        return false;
    };
    {
        let mut p = parent.borrow_mut();
        match &mut p.kind {
            NodeKind::Internal { left, right, .. } => {
                if Rc::ptr_eq(left, old) {
                    *left = new.clone();
                } else {
                    debug_assert!(Rc::ptr_eq(right, old));
                    *right = new.clone();
                }
            }
            NodeKind::Leaf { .. } => unreachable!("parent of a vertex must be internal"),
        }
    }
    fix_heights_upward(new);
    true
}

/// A rooted binary decision tree.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    pub root: NodeRef,
    pub dim: Option<usize>,
}

impl DecisionTree {
    pub fn new(root: NodeRef, dim: Option<usize>) -> Self {
        DecisionTree { root, dim }
    }

    pub fn height(&self) -> u32 {
        self.root.borrow().height
    }

    pub fn size(&self) -> u64 {
        self.root.borrow().data.len()
    }

    fn check_dim(&self, x: &FeatureVector) -> Result<()> {
        if let Some(d) = self.dim {
            if x.dim() != d {
                return Err(Error::DimensionMismatch {
                    got: x.dim(),
                    expected: d,
                });
            }
        }
        Ok(())
    }

    /// Label of the leaf reached by `x`; O(height) rule evaluations.
    pub fn predict(&self, x: &FeatureVector) -> Result<Label> {
        self.check_dim(x)?;
        let mut cur = self.root.clone();
        loop {
            let next = cur.borrow().route(x)?;
            match next {
                Some(child) => cur = child,
                None => {
                    let node = cur.borrow();
                    match &node.kind {
                        NodeKind::Leaf { label } => return Ok(label.label),
                        NodeKind::Internal { .. } => unreachable!(),
                    }
                }
            }
        }
    }

    /// Root-to-leaf vertex sequence visited by `x`.
    pub fn path(&self, x: &FeatureVector) -> Result<Vec<NodeRef>> {
        self.check_dim(x)?;
        let mut out = vec![self.root.clone()];
        loop {
            let next = out.last().unwrap().borrow().route(x)?;
            match next {
                Some(child) => out.push(child),
                None => return Ok(out),
            }
        }
    }

    /// Preorder visit of all vertices with their depths.
    pub fn visit<F: FnMut(&NodeRef, u32)>(&self, mut f: F) {
        let mut stack = vec![(self.root.clone(), 0u32)];
        while let Some((node, depth)) = stack.pop() {
            f(&node, depth);
            let n = node.borrow();
            if let NodeKind::Internal { left, right, .. } = &n.kind {
                stack.push((right.clone(), depth + 1));
                stack.push((left.clone(), depth + 1));
            }
        }
    }

    pub fn vertex_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _| n += 1);
        n
    }

    /// True when both trees take the same decision at every vertex.
    pub fn same_structure(&self, other: &DecisionTree) -> bool {
        fn eq(a: &NodeRef, b: &NodeRef) -> bool {
            let (a, b) = (a.borrow(), b.borrow());
            match (&a.kind, &b.kind) {
                (NodeKind::Leaf { label: la }, NodeKind::Leaf { label: lb }) => la == lb,
                (
                    NodeKind::Internal {
                        split: sa,
                        left: al,
                        right: ar,
                    },
                    NodeKind::Internal {
                        split: sb,
                        left: bl,
                        right: br,
                    },
                ) => sa == sb && eq(al, bl) && eq(ar, br),
                _ => false,
            }
        }
        eq(&self.root, &other.root)
    }

    /// Serializable structure dump (vertex list, root at index 0).
    pub fn to_dump(&self) -> TreeDump {
        fn emit(node: &NodeRef, nodes: &mut Vec<DumpNode>) -> usize {
            let idx = nodes.len();
            nodes.push(DumpNode {
                split: None,
                label: None,
                left: None,
                right: None,
                size: node.borrow().data.len(),
            });
            let n = node.borrow();
            match &n.kind {
                NodeKind::Leaf { label } => nodes[idx].label = Some(label.label),
                NodeKind::Internal { split, left, right } => {
                    nodes[idx].split = Some(*split);
                    let l = emit(left, nodes);
                    nodes[idx].left = Some(l);
                    let r = emit(right, nodes);
                    nodes[idx].right = Some(r);
                }
            }
            idx
        }
        let mut nodes = Vec::new();
        emit(&self.root, &mut nodes);
        TreeDump {
            version: DUMP_VERSION,
            dim: self.dim,
            nodes,
        }
    }

    /// Rebuild a tree skeleton from a dump. Vertex multisets are empty;
    /// checkers recompute vertex sets by routing the active set.
    pub fn from_dump(dump: &TreeDump) -> Option<DecisionTree> {
        fn build(
            dump: &TreeDump,
            idx: usize,
            parent: Option<WeakNodeRef>,
        ) -> Option<NodeRef> {
            let d = dump.nodes.get(idx)?;
            match (d.split, d.label) {
                (Some(split), None) => {
                    let node = TreeNode::new_leaf(
                        Rc::new(ExampleMultiset::new()),
                        LabelingRule {
                            label: Label::Class(0),
                        },
                        parent,
                        0,
                    );
                    let left = build(dump, d.left?, Some(Rc::downgrade(&node)))?;
                    let right = build(dump, d.right?, Some(Rc::downgrade(&node)))?;
                    let h = 1 + left.borrow().height.max(right.borrow().height);
                    {
                        let mut n = node.borrow_mut();
                        n.kind = NodeKind::Internal { split, left, right };
                        n.height = h;
                    }
                    Some(node)
                }
                (None, Some(label)) => Some(TreeNode::new_leaf(
                    Rc::new(ExampleMultiset::new()),
                    LabelingRule { label },
                    parent,
                    0,
                )),
                _ => None,
            }
        }
        let root = build(dump, 0, None)?;
        Some(DecisionTree::new(root, dump.dim))
    }
}

pub const DUMP_VERSION: u32 = 1;

/// Flat serialized tree: exactly one of `split`/`label` per vertex.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDump {
    pub version: u32,
    pub dim: Option<usize>,
    pub nodes: Vec<DumpNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpNode {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    pub size: u64,
}
