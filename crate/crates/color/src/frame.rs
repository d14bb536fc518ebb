use std::marker::PhantomData;

use crate::ColorError;

/// Which signal a [`Frame`] carries.
pub trait Signal: Copy + Default + std::fmt::Debug {
    const NAME: &'static str;
}

/// Nonlinear code values in `[0, 1]`: PQ/BT.2020 for HDR, gamma/BT.709 for SDR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Encoded;
/// Display light in cd/m², `[0, 10000]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Linear;
/// Planes I, Ct, Cp.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ictcp;

impl Signal for Encoded {
    const NAME: &'static str = "encoded";
}
impl Signal for Linear {
    const NAME: &'static str = "linear";
}
impl Signal for Ictcp {
    const NAME: &'static str = "ictcp";
}

/// Three planar channels of `height × width` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<S: Signal> {
    height: usize,
    width: usize,
    data: Vec<f32>,
    _signal: PhantomData<S>,
}

pub type EncodedFrame = Frame<Encoded>;
pub type LinearFrame = Frame<Linear>;
pub type IctcpFrame = Frame<Ictcp>;

impl<S: Signal> Frame<S> {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, ColorError> {
        if height == 0 || width == 0 {
            return Err(ColorError::Extents { height, width });
        }
        if data.len() != 3 * height * width {
            return Err(ColorError::Length { expected: 3 * height * width, got: data.len() });
        }
        Ok(Frame { height, width, data, _signal: PhantomData })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self, ColorError> {
        let plane = height * width;
        let data = rgb.iter().flat_map(|&v| std::iter::repeat_n(v, plane)).collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Planar data, channel-major.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let p = self.pixels();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let p = self.pixels();
        let i = y * self.width + x;
        [self.data[i], self.data[p + i], self.data[2 * p + i]]
    }

    /// Apply `f` to every pixel triple, producing another signal kind.
    pub fn map_pixels<T: Signal>(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Frame<T> {
        let p = self.pixels();
        let mut out = vec![0.0f32; 3 * p];
        for i in 0..p {
            let v = f([self.data[i] as f64, self.data[p + i] as f64, self.data[2 * p + i] as f64]);
            out[i] = v[0] as f32;
            out[p + i] = v[1] as f32;
            out[2 * p + i] = v[2] as f32;
        }
        Frame { height: self.height, width: self.width, data: out, _signal: PhantomData }
    }

    pub fn same_extents<T: Signal>(&self, other: &Frame<T>) -> Result<(), ColorError> {
        if self.extents() != other.extents() {
            return Err(ColorError::Mismatch { a: self.extents(), b: other.extents() });
        }
        Ok(())
    }
}
