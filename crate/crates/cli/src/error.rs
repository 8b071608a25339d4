use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] psm_core::Error),

    #[error("{0}")]
    Input(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("invalid config {path}: {message}")]
    ConfigSyntax { path: PathBuf, message: String },

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Image(#[from] image::ImageError),
}

impl CliError {
    /// 2 for bad configuration or input, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(
                psm_core::Error::Diverged { .. }
                | psm_core::Error::SolverNonFinite { .. }
                | psm_core::Error::NonFinite { .. },
            ) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
