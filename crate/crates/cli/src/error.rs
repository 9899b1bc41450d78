use thiserror::Error;

/// Exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    /// Ties between classes, or a failed verification check.
    pub const FLAGGED: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const BUDGET: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => exit::VALIDATION,
            CliError::Budget(_) => exit::BUDGET,
            CliError::Io(_) => exit::OTHER,
        }
    }
}

impl From<qmatrix::Error> for CliError {
    fn from(e: qmatrix::Error) -> Self {
        match e {
            qmatrix::Error::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}
