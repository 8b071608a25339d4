use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("non-finite values in {context}")]
    NonFinite { context: String },

    #[error("grid mismatch: expected {expected:?}, found {found:?}")]
    GridMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver produced non-finite values at update line {line} (measurement {index})")]
    SolverNonFinite { line: u8, index: usize },

    #[error("solver diverged at sweep {sweep}: data error {error:.3e} exceeds 10x initial {initial:.3e}")]
    Diverged {
        sweep: usize,
        error: f64,
        initial: f64,
        trace: Vec<f64>,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("geometry out of bounds: {0}")]
    OutOfBounds(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
