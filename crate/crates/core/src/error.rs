use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },
    #[error("tracking failure: {0}")]
    TrackingFailure(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("sequence failure at frame {frame}: {source}")]
    SequenceFailure {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("unsupported checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
