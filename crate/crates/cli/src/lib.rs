//! Batch driver for dual total variation restoration: image and noise
//! plumbing, experiment orchestration and CSV/report emission. The heavy
//! lifting lives in the `dualtv` library; this crate owns file formats and
//! run configuration.

pub mod config;
pub mod noise;
pub mod pgm;
pub mod pipeline;
pub mod report;
pub mod selftest;
pub mod synthetic;

use thiserror::Error;

/// Driver errors, partitioned by exit code: configuration problems exit
/// with 2, I/O problems with 3, solver failures with 4.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl From<dualtv::Error> for CliError {
    fn from(e: dualtv::Error) -> Self {
        match e {
            dualtv::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
