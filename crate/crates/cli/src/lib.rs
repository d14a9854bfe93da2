//! Experiment orchestration behind the `bifsim` binary.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod report;

use config::ConfigError;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(bifsim_core::Error),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<bifsim_core::Error> for CliError {
    fn from(e: bifsim_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// Process exit status: 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(bifsim_core::Error::Config(_)) => 2,
            _ => 3,
        }
    }
}
