use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("feature vectors have unequal lengths ({expected} vs {actual})")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("too few samples: {n} samples for {m} components")]
    TooFewSamples { n: usize, m: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("infeasible problem: nu * n = {nu_n} < 1")]
    Infeasible { nu_n: f64 },

    #[error("alphas violate box or simplex constraints by {violation:e}")]
    InfeasiblePoint { violation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("row {row} has {actual} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        actual: usize,
    },

    #[error("anomaly rejection sampling stalled: {accepted} accepted out of {draws} draws")]
    RejectionStall { accepted: usize, draws: usize },

    #[error("schema error: {0}")]
    SchemaError(String),

    #[error("unsupported format version {0:?}")]
    VersionError(String),

    #[error("dataset has no labels")]
    MissingLabels,

    #[error("only one class present in labels")]
    SingleClass,

    #[error("grid export requires a 2-dimensional model, got d = {0}")]
    DimensionNotTwo(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
