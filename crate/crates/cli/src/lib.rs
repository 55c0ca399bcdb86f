//! Experiment runner behind the `fisgan` binary.

pub mod experiment;
pub mod plot;
pub mod run;

use std::fmt;

pub use experiment::{DatasetSource, ExperimentFile, Overrides};

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    /// Bad configuration or file format (exit 2).
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    /// Failure while running (exit 1).
    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }

    /// Classifies a core error by its kind.
    pub fn from_core(error: fisgan_core::Error) -> Self {
        use fisgan_core::Error as E;
        match error {
            E::Config(_) | E::Format { .. } | E::Argument(_) => Self::config(error),
            other => Self::runtime(other),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}
