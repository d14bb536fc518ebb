use std::path::Path;

use hdrtv_color::EncodedFrame;
use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};

use crate::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    /// `2^bits − 1`, the code value that maps to 1.0.
    pub fn max_code(self) -> f64 {
        ((1u32 << self.bits()) - 1) as f64
    }
}

fn planar<T: Copy + Into<f64>>(w: u32, h: u32, raw: &[T], max: f64) -> Result<EncodedFrame, DataError> {
    let p = (w * h) as usize;
    let mut data = vec![0.0f32; 3 * p];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * p + i] = (px[c].into() / max) as f32;
        }
    }
    Ok(EncodedFrame::new(h as usize, w as usize, data)?)
}

/// Reads an RGB or grayscale PNG of the given depth, normalized to `[0, 1]`.
/// Alpha is dropped; grayscale is replicated to three channels.
pub fn read_frame(path: &Path, depth: BitDepth) -> Result<EncodedFrame, DataError> {
    let img = image::open(path).map_err(|source| DataError::Image { path: path.into(), source })?;
    let got = img.color().bits_per_pixel() as u32 / img.color().channel_count() as u32;
    if got != depth.bits() {
        return Err(DataError::BitDepth { path: path.into(), expected: depth.bits(), got });
    }
    let (w, h) = (img.width(), img.height());
    match depth {
        BitDepth::Eight => planar(w, h, img.to_rgb8().as_raw(), depth.max_code()),
        BitDepth::Sixteen => planar(w, h, img.to_rgb16().as_raw(), depth.max_code()),
    }
}

/// Quantizes to the nearest code value (clamped) and writes an RGB PNG.
pub fn write_frame(path: &Path, frame: &EncodedFrame, depth: BitDepth) -> Result<(), DataError> {
    let (h, w) = frame.extents();
    let max = depth.max_code();
    let code = |v: f32| (v as f64 * max).round().clamp(0.0, max);
    let interleaved = (0..h * w).flat_map(|i| (0..3).map(move |c| (c, i))).map(|(c, i)| code(frame.plane(c)[i]));
    let img = match depth {
        BitDepth::Eight => {
            let raw: Vec<u8> = interleaved.map(|v| v as u8).collect();
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w as u32, h as u32, raw).expect("sized buffer"))
        }
        BitDepth::Sixteen => {
            let raw: Vec<u16> = interleaved.map(|v| v as u16).collect();
            DynamicImage::ImageRgb16(
                ImageBuffer::<Rgb<u16>, _>::from_raw(w as u32, h as u32, raw).expect("sized buffer"),
            )
        }
    };
    img.save_with_format(path, ImageFormat::Png).map_err(|source| DataError::Image { path: path.into(), source })
}
