use thiserror::Error;

/// Errors produced by game construction, simulation and evaluation.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("non-finite input to {context}")]
    NonFiniteInput { context: &'static str },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("at least one trajectory is required")]
    EmptyBatch,

    #[error("non-finite action at trajectory {trajectory}, step {step}")]
    NonFiniteAction { trajectory: usize, step: usize },

    #[error("interaction weights break symmetry at pair ({i}, {j})")]
    AsymmetricWeights { i: usize, j: usize },

    #[error("{what} must be non-negative, got {value}")]
    NegativeInput { what: &'static str, value: f64 },

    #[error("maximum graph degree must be at least 2, got {degree}")]
    DegreeTooSmall { degree: usize },

    #[error("{0}")]
    Invalid(String),

    #[error("{what} is not supported: {detail}")]
    Unsupported { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
