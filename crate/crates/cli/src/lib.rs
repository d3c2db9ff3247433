//! Experiment runner: `run` from a config file, 1D `convergence` studies and
//! `peclet` reports, writing CSV outputs plus a re-runnable manifest.

pub mod commands;
pub mod config;

/// Exit code of a bad configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code of a failed solve.
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(#[source] slmsr::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl From<slmsr::Error> for CliError {
    /// Bad inputs detected by the library are configuration errors; everything
    /// else happened while solving or writing results.
    fn from(e: slmsr::Error) -> Self {
        match e {
            slmsr::Error::InvalidArgument(m) => CliError::Config(m),
            e => CliError::Solver(e),
        }
    }
}
