use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sbicov_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("budget accounting: {0}")]
    Accounting(String),
    #[error("report: {0}")]
    Report(String),
    #[error("{failed} of {total} cells failed")]
    CellsFailed { failed: usize, total: usize },
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
