//! Driver for the hk-conformal experiments: config parsing, commands,
//! reports and the acceptance suite.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod report;

use hk_conformal::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 0 success, 1 i/o (or failed checks in `verify`), 2 config, 3 precondition, 4 convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidModel(_)
                | CoreError::Schema(_)
                | CoreError::InvalidArgument(_)
                | CoreError::Resolution(_)
                | CoreError::Json(_) => 2,
                CoreError::Divergence(_) | CoreError::MaxIter(_) => 4,
                CoreError::Io(_) => 1,
                _ => 3,
            },
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}
