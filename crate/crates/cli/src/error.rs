use thiserror::Error;

use mndbn_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Report finished but something was missing or empty.
    #[error("warning: {0}")]
    Warning(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Warning(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Config(_)
            | CoreError::Contract(_)
            | CoreError::State(_)
            | CoreError::TooLarge { .. } => CliError::Config(msg),
            CoreError::Parse { .. } | CoreError::Io { .. } => CliError::Data(msg),
            CoreError::Numeric(_) => CliError::Numeric(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
