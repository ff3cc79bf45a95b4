use thiserror::Error;

/// Errors raised by estimation, inference and data handling.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("column '{name}' has zero standard deviation")]
    DegenerateColumn { name: String },

    #[error("invalid group structure: {0}")]
    InvalidGroups(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("solver diverged: {0}")]
    SolverDivergence(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("near-singular design: nodewise residual variance for column {column} is {sigma2:e}")]
    NearSingularDesign { column: usize, sigma2: f64 },

    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("non-positive variance {value:e} for coordinate {index}")]
    DegenerateVariance { index: usize, value: f64 },

    #[error("restriction matrix is rank deficient; linearly dependent rows: {rows:?}")]
    DeficientRestriction { rows: Vec<usize> },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
