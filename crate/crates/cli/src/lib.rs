//! Command-line front end: configuration, dispatch and reports.

pub mod config;
pub mod report;
pub mod run;

use std::path::Path;

use thiserror::Error;

pub use config::{parse_config, ConfigError, RunConfig};
pub use report::{RunReport, RunResult};
pub use run::{run, RunOutput};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] degell::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Parse(String),
}

/// Read and validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_config(&text)?)
}
