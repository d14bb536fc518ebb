//! Paired SDR/HDR frame sequences on disk: loading, temporal windows, patch
//! sampling, and a procedural generator for small training sets.
//!
//! Layout: `<root>/<scene>/{sdr,hdr}/NNNN.png`, SDR 8-bit gamma/BT.709,
//! HDR 16-bit PQ/BT.2020, indices zero-padded to four digits.

pub mod patch;
pub mod png;
pub mod scene;
pub mod synth;

use std::path::PathBuf;

pub use patch::{crop, sample_patches, TrainingSample};
pub use png::{read_frame, write_frame, BitDepth};
pub use scene::{
    dataset_scenes, load_manifest, load_scene, load_scenes, window, write_manifest, SequencePair, MANIFEST,
};
pub use synth::{degrade, make_synthetic, quantize, render_scene, synthetic_pairs, SynthConfig, ToneCurve};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: expected a {expected}-bit image, found {got}-bit")]
    BitDepth { path: PathBuf, expected: u32, got: u32 },
    #[error("scene {scene} frame {index}: missing {side} counterpart")]
    MissingFrame { scene: String, index: usize, side: &'static str },
    #[error("scene {scene}: {detail}")]
    Scene { scene: String, detail: String },
    #[error("window centre {center} outside a sequence of {len} frames")]
    Window { center: usize, len: usize },
    #[error("patch {patch} exceeds frame {height}x{width}")]
    Patch { patch: usize, height: usize, width: usize },
    #[error("manifest {path} line {line}: {detail}")]
    Manifest { path: PathBuf, line: usize, detail: String },
    #[error(transparent)]
    Color(#[from] hdrtv_color::ColorError),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DataError {
    let path = path.into();
    move |source| DataError::Io { path, source }
}
