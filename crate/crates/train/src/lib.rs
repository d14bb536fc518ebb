//! L1 training with Adam under a stepwise learning-rate schedule, resumable
//! from checkpoints, plus full-resolution evaluation.

pub mod adam;
pub mod config;
pub mod eval;
pub mod trainer;

use std::path::PathBuf;

use hdrtv_color::ColorError;
use hdrtv_data::DataError;
use hdrtv_metrics::MetricError;
use hdrtv_model::ModelError;
use hdrtv_tensor::TensorError;

pub use adam::Adam;
pub use config::{AdamConfig, Schedule, TrainConfig};
pub use eval::{batch_tensors, evaluate, frame_to_tensor, predict_frame, tensor_to_frame, Passthrough, Predictor};
pub use trainer::{data_digest, LossLog, LossRecord, TrainState, Trainer, CHECKPOINT_FILE, LOSS_LOG_FILE};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient in {path}[{index}] = {value}")]
    NonFiniteGradient { path: String, index: usize, value: f32 },
    #[error("non-finite loss at iteration {iter}")]
    NonFiniteLoss { iter: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl TrainError {
    /// Failures of the numerics rather than of inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(self, TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteLoss { .. })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> TrainError {
    let path = path.into();
    move |source| TrainError::Io { path, source }
}
