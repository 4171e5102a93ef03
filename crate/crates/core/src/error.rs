use thiserror::Error;

/// Errors raised by the library.
///
/// The variants are grouped so that a front end can map them onto a small
/// exit-code taxonomy: configuration, data, numerical divergence and
/// degenerate prior estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("negative ratio value {value} at index {index}")]
    NegativeRatio { index: usize, value: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("csv error at row {row}, column {column}: {reason}")]
    Csv {
        row: usize,
        column: usize,
        reason: String,
    },

    #[error("non-finite objective at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error(
        "degenerate prior estimation: gamma_bar = {gamma_bar} >= 1 leaves no admissible threshold \
         (n_pos = {n_pos}, n_unl = {n_unl}, gamma = {gamma})"
    )]
    DegeneratePrior {
        gamma_bar: f64,
        n_pos: usize,
        n_unl: usize,
        gamma: f64,
    },

    #[error("degenerate prior estimate: {0}")]
    DegenerateEstimate(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("generator `{0}` is not strongly convex")]
    NotStronglyConvex(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
