use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown operator descriptor `{0}`")]
    UnknownDescriptor(String),

    #[error("quadratic is not positive semidefinite (smallest eigenvalue {0:e})")]
    IndefiniteQuadratic(f64),

    #[error("operator is not monotone (smallest eigenvalue of symmetric part {0:e})")]
    NotMonotone(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value in block {block} at iteration {iteration}")]
    NonFinite { block: String, iteration: usize },

    #[error("invalid problem: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
