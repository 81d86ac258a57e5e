use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{task}` cannot be generated: {reason}")]
    TaskBounds { task: String, reason: String },
    #[error("distribution does not sum to one (total {total})")]
    Unnormalized { total: f64 },
    #[error("{kind} expects {expected} arguments, got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
