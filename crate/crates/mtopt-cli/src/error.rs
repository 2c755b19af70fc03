//! Process-level errors with their exit codes.

use std::fmt;

/// Exit code for verification failures and unexpected I/O problems.
pub const EXIT_FAILURE: u8 = 1;
/// Exit code for invalid configs and missing inputs.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code for runs that stopped on divergence (outputs retained).
pub const EXIT_DIVERGENCE: u8 = 3;

/// Top-level error carrying the exit code the process should return.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or missing input file (exit 2).
    Config(String),
    /// One or more runs diverged; partial outputs were kept (exit 3).
    Divergence(String),
    /// A verification suite failed (exit 1).
    Verification(String),
    /// Filesystem or serialization failure (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Verification(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError::Io(message.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid config: {m}"),
            CliError::Divergence(m) => write!(f, "divergence: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
