use std::path::PathBuf;

use predprey_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Model(#[from] CoreError),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("plot error on {path}: {msg}")]
    Plot { path: PathBuf, msg: String },
}

impl CliError {
    /// 0 success, 1 i/o, 2 config, 3 numerical failure, 4 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(e) if is_config_error(e) => 2,
            CliError::Model(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Plot { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Errors caused by the inputs rather than by the numerics.
fn is_config_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::InvalidParameter { .. }
            | CoreError::GainConstraint(_)
            | CoreError::InfeasibleSetpoint { .. }
            | CoreError::LyapunovConfig(_)
            | CoreError::LengthMismatch { .. }
            | CoreError::NonPositive { .. }
    )
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
