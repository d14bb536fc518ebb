//! Full-reference quality metrics for HDR frames: PSNR and SR-SIM on the
//! PQ-encoded values, ΔE_ITP through linear light and ICtCp.

mod report;
pub mod srsim;

use hdrtv_color::{ictcp_pixel, pq, ColorError, EncodedFrame};

pub use report::{FrameScore, MetricReport, ReportError, PSNR_CAP_DB};
pub use srsim::srsim;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error(transparent)]
    Frame(#[from] ColorError),
    #[error("frame {height}x{width} is too small for SR-SIM (luma needs at least {min} pixels per side)")]
    TooSmall { height: usize, width: usize, min: usize },
}

/// `10·log10(peak² / MSE)` over all three planes. Identical inputs give
/// `+∞`; reports cap it at [`PSNR_CAP_DB`].
pub fn psnr(a: &EncodedFrame, b: &EncodedFrame, peak: f64) -> Result<f64, MetricError> {
    a.same_extents(b)?;
    let mse = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Per-pixel `720·‖(ΔI, ½ΔCt, ΔCp)‖` for one pair of linear BT.2020 pixels.
pub fn delta_e_itp_pixel(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (p, q) = (ictcp_pixel(a), ictcp_pixel(b));
    delta_e_itp_ictcp(p, q)
}

/// Same as [`delta_e_itp_pixel`] for pixels already in ICtCp.
pub fn delta_e_itp_ictcp(p: [f64; 3], q: [f64; 3]) -> f64 {
    let (di, dt, dp) = (p[0] - q[0], 0.5 * (p[1] - q[1]), p[2] - q[2]);
    720.0 * (di * di + dt * dt + dp * dp).sqrt()
}

/// Mean ΔE_ITP over pixels of two PQ/BT.2020 frames.
pub fn delta_e_itp(a: &EncodedFrame, b: &EncodedFrame) -> Result<f64, MetricError> {
    a.same_extents(b)?;
    let lin = |f: &EncodedFrame, y: usize, x: usize| f.pixel(y, x).map(|v| pq::eotf(v as f64));
    let mut total = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            total += delta_e_itp_pixel(lin(a, y, x), lin(b, y, x));
        }
    }
    Ok(total / a.pixels() as f64)
}

/// All three metrics of one predicted frame against its reference.
pub fn score_frame(index: usize, pred: &EncodedFrame, reference: &EncodedFrame) -> Result<FrameScore, MetricError> {
    Ok(FrameScore {
        index,
        psnr_db: psnr(pred, reference, 1.0)?,
        srsim: srsim(pred, reference)?,
        delta_e_itp: delta_e_itp(pred, reference)?,
    })
}
