use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid sheaf: {0}")]
    InvalidSheaf(String),

    #[error("diagonal block of node {node} is singular")]
    SingularBlock { node: usize },

    #[error("eigendecomposition failed: {0}")]
    EigendecompositionFailure(String),

    #[error("backward called before forward")]
    MissingForwardCache,

    #[error("mask selects no nodes")]
    EmptyMask,

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("edge {edge} has zero weight")]
    ZeroWeightEdge { edge: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
