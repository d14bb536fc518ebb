use thiserror::Error;

use crate::Shape;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: invalid argument: {detail}")]
    Invalid { op: &'static str, detail: String },

    #[error("backward requires a single-element loss, got shape {0:?}")]
    NonScalarLoss(Shape),

    #[error("backward called on a tensor that is not part of a differentiable graph")]
    NotDifferentiable,

    #[error("backward already ran on this graph; build a new graph for another pass")]
    BackwardTwice,

    #[error("malformed tensor dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(TensorError::Shape { op, detail: detail.into() })
}

pub(crate) fn invalid<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(TensorError::Invalid { op, detail: detail.into() })
}
