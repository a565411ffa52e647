//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// A model table failed validation (row sums, negativity, shape, masks).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Sampling or evaluation touched a state flagged unreachable. Dynamics
    /// rows under the reachability mask are placeholders, so this always
    /// signals a bug in an instance builder, never user error.
    #[error("masked row access at step {step}, state {state}: builder inconsistency")]
    MaskedRowAccess { step: usize, state: usize },

    /// An enumeration walked past its node cap.
    #[error("enumeration cap exceeded: {visited} nodes visited, cap {cap}")]
    CapExceeded { visited: usize, cap: usize },

    /// `construct_block_inverse` could not find a window/action-sequence pair
    /// under which the unmasked states split into invertible blocks.
    #[error("no supported block structure for a generalized inverse: {0}")]
    UnsupportedStructure(String),

    /// Bad arguments: family preconditions, dimension mismatches, etc.
    #[error("invalid parameters: {0}")]
    BadParams(String),

    /// Serialized artifact was malformed or had the wrong format tag.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
