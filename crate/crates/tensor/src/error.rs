use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape for {op}: {shape:?} ({detail})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        detail: String,
    },

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("{op} requires a positive {what}, got {value}")]
    InvalidParameter {
        op: &'static str,
        what: &'static str,
        value: i64,
    },

    #[error("batch norm inference requested before any training step")]
    BatchNormUninitialized,

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("backward requires a scalar tensor, got shape {shape:?}")]
    BackwardNonScalar { shape: Vec<usize> },

    #[error("optimizer state holds {state} parameter buffers, got {given}")]
    OptimizerStateMismatch { state: usize, given: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<V> = std::result::Result<V, TensorError>;
