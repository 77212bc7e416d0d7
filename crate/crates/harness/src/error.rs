use sojourn_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    /// The flow or a numerical procedure failed during a run.
    #[error("flow failure: {0}")]
    Flow(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type HarnessResult<T> = Result<T, HarnessError>;

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for everything that
    /// went wrong while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Flow(_) | HarnessError::Io(_) => 3,
        }
    }

    /// Classifies a core error raised while running a validated config.
    pub fn from_run(err: CoreError) -> Self {
        match err {
            CoreError::InvalidParams(_) | CoreError::Unsupported(_) => {
                HarnessError::Config(err.to_string())
            }
            _ => HarnessError::Flow(err.to_string()),
        }
    }
}
