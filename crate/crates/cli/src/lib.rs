//! Pipeline driver: JSON configuration, command dispatch, report emission
//! and run manifests.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{execute, Command};
pub use config::{load_config, PipelineConfig};
pub use manifest::RunManifest;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error during {stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("training error during {stage}: {message}")]
    Training { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Training { .. } => 4,
        }
    }
}

/// Caps the global rayon pool from `HELIO_THREADS` (unset or 0 = automatic).
pub fn init_threads(var: Option<&str>) -> Result<(), CliError> {
    let n: usize = match var {
        None => return Ok(()),
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("HELIO_THREADS={v:?} is not a number")))?,
    };
    if n > 0 {
        // A pool that is already built keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
