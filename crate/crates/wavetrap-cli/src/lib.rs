//! Configuration-driven experiment runner for the wavetrap library.

pub mod config;
pub mod experiments;
pub mod report;
pub mod series;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] wavetrap::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for usage errors, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 3,
        }
    }
}

pub use config::{Command, ExperimentConfig, Settings};
pub use report::{Check, RunReport};
