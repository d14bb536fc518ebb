//! Multi-frame SDR-to-HDR conversion network.
//!
//! A `2T+1` frame window is stacked on channels and fused by a deformable
//! convolution whose offsets come from a large-kernel estimator ([`dmfa`]).
//! The aligned features are modulated by scale/shift vectors estimated from
//! the whole window, from the center frame, and per pixel, next to a
//! large-kernel residual branch ([`stfm`]). A large-kernel enhancement stage
//! ([`lkqe`]) and a 3×3 head produce the center HDR frame.

pub mod checkpoint;
pub mod config;
pub mod dmfa;
pub mod layers;
pub mod lkqe;
mod net;
pub mod params;
pub mod stfm;

use hdrtv_tensor::{Shape, TensorError};

pub use checkpoint::{config_digest, Checkpoint};
pub use config::{ModelConfig, Toggles, PRESETS};
pub use net::{DslNet, Mode, Trace};
pub use params::{Init, ParamSpec, ParamStore};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("unknown preset {name:?}; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },
    #[error("expected 2T+1 = {expected} frames (T = {t}), got {got}")]
    FrameCount { expected: usize, got: usize, t: usize },
    #[error("frame extents {height}x{width}: {detail}")]
    Extents { height: usize, width: usize, detail: String },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("unexpected parameter {0}")]
    UnexpectedParam(String),
    #[error("parameter {path}: expected extents {expected:?}, got {got:?}")]
    ParamShape { path: String, expected: Shape, got: Shape },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
