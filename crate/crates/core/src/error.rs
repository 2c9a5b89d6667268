use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every coordinate was zeroed by the shrinkage step.
    #[error("shrinkage zeroed every coordinate")]
    DegenerateShrinkage,

    #[error("hard sign is not differentiable; use the smooth training mode")]
    NonDifferentiable,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            op,
            expected,
            found,
        })
    }
}
