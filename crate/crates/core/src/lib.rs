//! Fully-dynamic decision trees with worst-case bounded work per update.
//!
//! The library maintains a greedy-style decision tree under an arbitrary
//! stream of insertions and deletions of labeled examples. Instead of
//! rebuilding from scratch (amortized cost) or ingesting append-only
//! streams, the maintainer spreads every rebuild over the update requests
//! that made it necessary, so the number of elementary operations between
//! any two consecutive updates stays bounded.
//!
//! The main entry points are:
//!
//! - [`maintain::TreeMaintainer`]: the fully-dynamic maintainer; feed it
//!   [`multiset::UpdateRequest`]s and query predictions at any time.
//! - [`delayed::DelayedRebuild`]: the round-based resumable rebuilder the
//!   maintainer runs at every vertex; usable standalone.
//! - [`greedy::greedy_build`]: the one-shot greedy tree construction.
//! - [`oracle`]: independent brute-force reference implementations and
//!   invariant checkers used to verify all of the above.
//!
//! All work is measured through an explicit [`opcount::OpCounter`], which
//! charges one unit per feature comparison, associative-map access, and
//! arithmetic gain update. Budget guarantees are asserted against this
//! counter, never against wall-clock time.

pub mod delayed;
pub mod error;
pub mod gain;
pub mod greedy;
pub mod maintain;
pub mod multiset;
pub mod opcount;
pub mod oracle;
pub mod rule;
pub mod split;
pub mod tree;

pub use error::Error;
pub use gain::{conditional_gain, smoothness_bound, GainKind, LabelStats};
pub use maintain::TreeMaintainer;
pub use multiset::{
    active_set, edit_distance, relative_edit_distance, ExampleMultiset, FeatureVector, Label,
    LabeledExample, UpdateOp, UpdateRequest,
};
pub use opcount::OpCounter;
pub use rule::{Decision, LabelingRule, ThresholdRule};
pub use split::{best_split, SplitKind, SplitRule};
pub use tree::DecisionTree;

/// Depth budget value meaning "no depth limit".
pub const UNBOUNDED_DEPTH: u32 = u32::MAX;

/// Gains within this distance are treated as tied and resolved by the
/// deterministic (feature, kind, threshold) order.
pub const GAIN_TIE_TOL: f64 = 1e-9;
