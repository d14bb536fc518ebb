use hdrtv_color::EncodedFrame;
use rand::Rng;

use crate::scene::{window, SequencePair};
use crate::DataError;

/// `2t+1` SDR patches and the HDR centre patch, all cut at `crop_origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x: Vec<EncodedFrame>,
    pub y: EncodedFrame,
    /// (row, column) of the top-left corner.
    pub crop_origin: (usize, usize),
    pub scene_id: String,
    pub center: usize,
}

/// `h × w` region starting at (`top`, `left`).
pub fn crop(frame: &EncodedFrame, top: usize, left: usize, h: usize, w: usize) -> Result<EncodedFrame, DataError> {
    let (fh, fw) = frame.extents();
    if h == 0 || w == 0 || top + h > fh || left + w > fw {
        return Err(DataError::Patch { patch: h.max(w), height: fh, width: fw });
    }
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        let plane = frame.plane(c);
        for y in top..top + h {
            data.extend_from_slice(&plane[y * fw + left..y * fw + left + w]);
        }
    }
    Ok(EncodedFrame::new(h, w, data)?)
}

/// A `patch × patch` crop at one uniformly drawn origin, applied to the
/// window around `center` and to the HDR centre frame.
pub fn sample_patches(
    seq: &SequencePair,
    center: usize,
    t: usize,
    patch: usize,
    rng: &mut impl Rng,
) -> Result<TrainingSample, DataError> {
    let (h, w) = seq.extents();
    if patch == 0 || patch > h || patch > w {
        return Err(DataError::Patch { patch, height: h, width: w });
    }
    let frames = window(seq, center, t)?;
    let top = rng.random_range(0..=h - patch);
    let left = rng.random_range(0..=w - patch);
    let x = frames.iter().map(|f| crop(f, top, left, patch, patch)).collect::<Result<_, _>>()?;
    Ok(TrainingSample {
        x,
        y: crop(&seq.hdr[center], top, left, patch, patch)?,
        crop_origin: (top, left),
        scene_id: seq.scene_id.clone(),
        center,
    })
}
