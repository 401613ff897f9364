use thiserror::Error;

/// Errors surfaced by the library.
///
/// Precondition violations (deleting an absent example, empty inputs) are
/// hard errors rather than silent no-ops: the update-stream model assumes
/// well-formed active sets, and tolerating malformed input would mask
/// harness bugs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("delete of an example not present in the multiset")]
    DeleteAbsent,
    #[error("delete of an absent example at stream position {index}")]
    DeleteAbsentAt { index: usize },
    #[error("operation requires a nonempty multiset")]
    EmptySet,
    #[error("both multisets are empty")]
    BothEmpty,
    #[error("feature index {index} out of range for dimension {dim}")]
    BadFeatureIndex { index: usize, dim: usize },
    #[error("feature vector has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("feature values and regression labels must be finite")]
    NonFinite,
    #[error("epsilon must lie in (0, 1)")]
    BadEpsilon,
    #[error("instance needs at least one scheduled pull: epsilon * n < 1")]
    TooSmall,
    #[error("instance already returned its tree")]
    Exhausted,
    #[error("threshold alpha out of range for the gain kind")]
    BadThreshold,
    #[error("internal consistency: split rule produced an empty side")]
    ImproperSplit,
    #[error("internal consistency: gain evaluated to {0}, below the clamping tolerance")]
    NegativeGain(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
