//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions do not line up (non-square input, mismatched lengths, empty sets).
    #[error("shape error: {0}")]
    Shape(String),

    /// A matrix that must be symmetric is not, within tolerance.
    #[error("matrix is not symmetric: max deviation {max_dev:.3e} at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize, max_dev: f64 },

    /// A linear system could not be solved (Cholesky pivot <= 0 or similar).
    #[error("singular system: {0}")]
    Singular(String),

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A diagonal entry or row norm needed for normalization is not positive.
    /// Usually signals a zero gradient/feature row; the index names the culprit.
    #[error("normalization error: nonpositive norm at index {index}")]
    Normalization { index: usize },

    /// Fewer samples than the operation requires (GAC needs n >= 2).
    #[error("insufficient sample: got {got}, need at least {need}")]
    InsufficientSample { got: usize, need: usize },

    /// A normalized quantity is undefined at this size (e.g. entropy at n = 1).
    #[error("degenerate size: {0}")]
    DegenerateSize(String),

    /// Total GAC is undefined because the loss never decreased.
    #[error("undefined total: sum of loss decrements is zero")]
    UndefinedTotal,

    /// Training produced a non-finite loss. Carries the last finite trace.
    #[error("training diverged at step {step}")]
    TrainingDiverged {
        step: usize,
        last_losses: Vec<f64>,
    },

    /// An out-of-sample smoother matrix was required but not present.
    #[error("missing matrix: {0}")]
    MissingMatrix(String),

    /// A binary input file does not follow its declared format.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A JSON config could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// An input that must be nonempty is empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A structural invariant the code maintains itself was violated.
    #[error("internal invariant violation: {0}")]
    Internal(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
