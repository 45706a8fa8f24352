//! CLI error type and the exit-code contract: 0 success, 1 config error,
//! 2 numerical failure, 3 IO error.

use std::fmt;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration file or command-line usage.
    Config(String),
    /// Failure propagated from the numerical core, tagged with the job that
    /// hit it (system, diffusion, strategy, seed).
    Core {
        context: String,
        source: nse_core::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core { source, .. } => match source {
                nse_core::Error::InvalidSpec(_)
                | nse_core::Error::TargetTooLarge { .. }
                | nse_core::Error::DimTooLarge { .. } => 1,
                nse_core::Error::NonFinite { .. }
                | nse_core::Error::NonFiniteLoss { .. }
                | nse_core::Error::DegenerateKernel
                | nse_core::Error::AcceptanceTooLow { .. }
                | nse_core::Error::ShapeMismatch { .. } => 2,
                nse_core::Error::Io(_)
                | nse_core::Error::Json(_)
                | nse_core::Error::MalformedFile(_) => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Wraps a core error with job context, e.g. "train allen-cahn D=1e-3".
pub fn in_context(context: impl Into<String>) -> impl FnOnce(nse_core::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Core { context, source }
}
