//! Error types shared across the simulator.

use thiserror::Error;

/// Errors produced while building or running a simulation.
#[derive(Debug, Error)]
pub enum SimError {
    /// A configuration value is invalid. Carries the offending field name.
    #[error("configuration error: field `{field}`: {message}")]
    Config { field: String, message: String },

    /// The run configuration file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The scheduler could not operate (e.g. the simulation is shorter
    /// than the selection window).
    #[error("scheduling error: {0}")]
    Scheduling(String),

    /// Output files could not be written.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        SimError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 1 for configuration/parse errors,
    /// 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } | SimError::Parse { .. } => 1,
            SimError::Scheduling(_) | SimError::Io(_) => 2,
        }
    }
}
