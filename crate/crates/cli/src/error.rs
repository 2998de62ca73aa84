use std::io;
use std::path::PathBuf;

use robcond_core::Error as CoreError;

/// Failures surfaced by the command-line front end, each tied to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed input or an unsupported combination of options.
    #[error("{0}")]
    Usage(String),
    /// Marginals that fail validation.
    #[error("{0}")]
    Validation(String),
    #[error("query is unconditioned: {0}")]
    Unconditioned(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Validation(_) => 3,
            CliError::Unconditioned(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Unconditioned => CliError::Unconditioned(
                "no distribution consistent with the marginals gives the observed part positive probability".into(),
            ),
            CoreError::InvalidMarginals(_)
            | CoreError::Unrealizable
            | CoreError::ZeroPartition
            | CoreError::Infeasible
            | CoreError::Unbounded
            | CoreError::NumericalFailure => CliError::Validation(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}
