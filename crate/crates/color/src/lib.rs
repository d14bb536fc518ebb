//! HDR10 color science: SMPTE ST 2084 (PQ), BT.709 ↔ BT.2020 primaries,
//! BT.2100 ICtCp, and the display-referred SDR decode used by the
//! synthetic data generator.
//!
//! Scalar math runs in `f64`; frames store `f32`.

mod frame;
mod matrix;
pub mod pq;

use std::sync::atomic::{AtomicU64, Ordering};

pub use frame::{Encoded, EncodedFrame, Frame, Ictcp, IctcpFrame, Linear, LinearFrame, Signal};
pub use matrix::{
    bt2020_to_bt709_matrix, bt709_to_bt2020_matrix, check_conditioning, rgb_to_xyz, Mat3, BT2020_PRIMARIES,
    BT709_PRIMARIES, D65, ICTCP_FROM_LMS, LMS_FROM_BT2020,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ColorError {
    #[error("frame extents {height}x{width} must be positive")]
    Extents { height: usize, width: usize },
    #[error("frame data holds {got} values, expected {expected} (3 planes)")]
    Length { expected: usize, got: usize },
    #[error("frame extents differ: {a:?} vs {b:?}")]
    Mismatch { a: (usize, usize), b: (usize, usize) },
    #[error("matrix {name} is singular or ill-conditioned (det = {det:e})")]
    Singular { name: &'static str, det: f64 },
}

/// Peak of the SDR reference display, cd/m².
pub const SDR_PEAK: f64 = 100.0;
pub const SDR_GAMMA: f64 = 2.4;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of out-of-range inputs clamped by the transfer functions so far.
pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

pub(crate) fn clamp_counted(v: f64, lo: f64, hi: f64) -> f64 {
    if v >= lo && v <= hi {
        return v;
    }
    if CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed) == 0 {
        log::warn!("color input {v} outside [{lo}, {hi}] clamped; further clamps are only counted");
    }
    if v.is_nan() {
        lo
    } else {
        v.clamp(lo, hi)
    }
}

/// Gamma-2.4 SDR code value to cd/m² (100 cd/m² peak).
pub fn sdr_decode(v: f64) -> f64 {
    SDR_PEAK * clamp_counted(v, 0.0, 1.0).powf(SDR_GAMMA)
}

/// Inverse of [`sdr_decode`].
pub fn sdr_encode(nits: f64) -> f64 {
    (clamp_counted(nits, 0.0, SDR_PEAK) / SDR_PEAK).powf(1.0 / SDR_GAMMA)
}

pub fn sdr_gamma_decode(frame: &EncodedFrame) -> LinearFrame {
    frame.map_pixels(|p| p.map(sdr_decode))
}

pub fn sdr_gamma_encode(frame: &LinearFrame) -> EncodedFrame {
    frame.map_pixels(|p| p.map(sdr_encode))
}

pub fn pq_eotf(frame: &EncodedFrame) -> LinearFrame {
    frame.map_pixels(|p| p.map(pq::eotf))
}

pub fn pq_oetf(frame: &LinearFrame) -> EncodedFrame {
    frame.map_pixels(|p| p.map(pq::oetf))
}

fn apply(m: &Mat3, p: [f64; 3]) -> [f64; 3] {
    let v = m * nalgebra::Vector3::from(p);
    [v[0], v[1], v[2]]
}

/// Linear light, BT.709 primaries → BT.2020 primaries (same white).
pub fn bt709_to_bt2020(frame: &LinearFrame) -> LinearFrame {
    let m = bt709_to_bt2020_matrix();
    frame.map_pixels(|p| apply(&m, p))
}

pub fn bt2020_to_bt709(frame: &LinearFrame) -> LinearFrame {
    let m = bt2020_to_bt709_matrix();
    frame.map_pixels(|p| apply(&m, p))
}

/// One linear BT.2020 pixel in cd/m² to (I, Ct, Cp).
pub fn ictcp_pixel(rgb: [f64; 3]) -> [f64; 3] {
    let lms = apply(&LMS_FROM_BT2020, rgb).map(pq::oetf);
    apply(&ICTCP_FROM_LMS, lms)
}

pub fn bt2020_rgb_to_ictcp(frame: &LinearFrame) -> IctcpFrame {
    frame.map_pixels(ictcp_pixel)
}
