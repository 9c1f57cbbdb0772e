use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("solver did not converge: {0}")]
    Convergence(wflow_core::Error),
    #[error("solver failure: {0}")]
    Solver(wflow_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 for
    /// non-convergence, 4 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Solver(_) | CliError::Io { .. } | CliError::Internal(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<wflow_core::Error> for CliError {
    fn from(e: wflow_core::Error) -> Self {
        match e {
            wflow_core::Error::NotConverged { .. } => CliError::Convergence(e),
            other => CliError::Solver(other),
        }
    }
}

/// Wraps core errors raised while building inputs from a config.
pub(crate) fn setup(e: wflow_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
