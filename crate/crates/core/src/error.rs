use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FlowError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty batch")]
    EmptyBatch,

    #[error("unexpected end of model file")]
    TruncatedModel,

    #[error("model file: {0}")]
    Model(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("non-finite state at rollout step {step}")]
    NonFiniteState { step: usize },

    #[error("bound overflows: n*L*Delta = {exponent} exceeds 700")]
    BoundOverflow { exponent: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FlowError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlowError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FlowError::InvalidInput(msg.into())
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FlowError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
