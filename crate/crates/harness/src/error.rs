use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// The experiment description is unusable; nothing was run.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] bilbao_core::Error),
    /// Some replications failed; the others were written out.
    #[error("{failed} of {total} replications failed")]
    Replications { failed: usize, total: usize },
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
