//! Library half of the experiment runner: configuration, grid execution,
//! reporting and rate certification. The `stravg` binary is a thin clap
//! wrapper over these modules.

pub mod certify;
pub mod config;
pub mod experiment;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] stravg::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing data: {0}")]
    Missing(String),
}
