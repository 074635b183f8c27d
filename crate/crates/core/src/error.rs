use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero vector has no projective class")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point lies at infinity of chart {chart}")]
    PointAtInfinity { chart: usize },
    #[error("lift evaluated to (numerically) zero; map is degenerate at this point")]
    DegenerateImage,
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("solver failure: {reason} (path {path:?})")]
    SolverFailure { reason: String, path: Vec<usize> },
    #[error("fiber equation degenerates in every chart")]
    DegenerateFiber,
    #[error("elimination degenerate after {attempts} attempts")]
    EliminationDegenerate { attempts: usize },
    #[error("backward tree needs {needed} nodes, limit is {limit}")]
    TreeTooLarge { needed: u128, limit: u64 },
    #[error("start point lies on the declared exceptional set (distance {distance:e})")]
    ExceptionalStart { distance: f64 },
    #[error("grid resolution {0} exceeds the maximum of 2048")]
    GridOverflow(usize),
    #[error("test function `{0}` has no gradient bound")]
    NotC1(String),
    #[error("test function `{label}` is not normalized (sup {sup})")]
    Unnormalized { label: String, sup: f64 },
    #[error("local degree trials disagree: {counts:?}")]
    AmbiguousCount { counts: Vec<usize> },
    #[error("regularization schedule underflows at level {level}")]
    ScheduleUnderflow { level: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn solver(reason: impl Into<String>) -> Self {
        Error::SolverFailure {
            reason: reason.into(),
            path: Vec::new(),
        }
    }

    /// Prepends a tree index to the path of a solver failure.
    pub(crate) fn at_node(self, index: usize) -> Self {
        match self {
            Error::SolverFailure { reason, mut path } => {
                path.insert(0, index);
                Error::SolverFailure { reason, path }
            }
            other => other,
        }
    }
}
