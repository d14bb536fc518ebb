//! Procedural HDR scenes and their SDR counterparts.
//!
//! Content is drawn in linear BT.709 light (cd/m²) so that it lies inside
//! both gamuts, then stored as PQ/BT.2020 16-bit. The SDR frame comes from the
//! stored HDR frame by: PQ EOTF, per-channel tone curve, BT.2020 → BT.709,
//! clip to the 100 cd/m² display, gamma 2.4 encode, 8-bit quantization.

use std::fs;
use std::path::{Path, PathBuf};

use hdrtv_color::{
    bt2020_to_bt709, bt709_to_bt2020, pq_eotf, pq_oetf, sdr_gamma_encode, EncodedFrame, LinearFrame, SDR_PEAK,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::png::{write_frame, BitDepth};
use crate::scene::{frame_path, write_manifest, SequencePair};
use crate::{io_err, DataError};

/// Maps HDR display light to SDR display light, per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToneCurve {
    /// Extended Reinhard: with `x = L/100` and `w = white/100`,
    /// `L' = 100·x(1 + x/w²)/(1 + x)`; `white` maps to 100 cd/m², brighter clips.
    Reinhard { white_nits: f64 },
    /// `L' = L`; everything above 100 cd/m² clips.
    Identity,
}

impl Default for ToneCurve {
    fn default() -> Self {
        ToneCurve::Reinhard { white_nits: 1000.0 }
    }
}

impl ToneCurve {
    pub fn apply(self, nits: f64) -> f64 {
        let out = match self {
            ToneCurve::Identity => nits,
            ToneCurve::Reinhard { white_nits } => {
                let (x, w) = (nits / SDR_PEAK, white_nits / SDR_PEAK);
                SDR_PEAK * x * (1.0 + x / (w * w)) / (1.0 + x)
            }
        };
        out.clamp(0.0, SDR_PEAK)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub scenes: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub curve: ToneCurve,
    /// Draw near-peak highlight blobs.
    pub highlights: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scenes: 4,
            frames: 10,
            height: 32,
            width: 32,
            seed: 0,
            curve: ToneCurve::default(),
            highlights: true,
        }
    }
}

/// Rounds to the code values of `depth`, as a write/read cycle would.
pub fn quantize(frame: &EncodedFrame, depth: BitDepth) -> EncodedFrame {
    let max = depth.max_code();
    frame.map_pixels(|p| p.map(|v| (v * max).round().clamp(0.0, max) / max))
}

/// SDR code values (unquantized) for one PQ/BT.2020 frame.
pub fn degrade(hdr: &EncodedFrame, curve: ToneCurve) -> EncodedFrame {
    let display: LinearFrame = pq_eotf(hdr).map_pixels(|p| p.map(|v| curve.apply(v)));
    let bt709: LinearFrame = bt2020_to_bt709(&display).map_pixels(|p| p.map(|v| v.clamp(0.0, SDR_PEAK)));
    sdr_gamma_encode(&bt709)
}

enum Shape {
    Disc { r: f64 },
    Rect { hw: f64, hh: f64 },
    Blob { sigma: f64 },
}

struct Sprite {
    shape: Shape,
    color: [f64; 3],
    pos: (f64, f64),
    vel: (f64, f64),
}

impl Sprite {
    /// Coverage (hard shapes) or weight (blobs) at pixel centre (y, x) in frame `f`.
    fn weight(&self, f: usize, y: f64, x: f64) -> f64 {
        let (cy, cx) = (self.pos.0 + self.vel.0 * f as f64, self.pos.1 + self.vel.1 * f as f64);
        let (dy, dx) = (y - cy, x - cx);
        match self.shape {
            Shape::Disc { r } => f64::from(dy * dy + dx * dx <= r * r),
            Shape::Rect { hw, hh } => f64::from(dx.abs() <= hw && dy.abs() <= hh),
            Shape::Blob { sigma } => (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp(),
        }
    }
}

struct Layout {
    base: [f64; 3],
    tint: [f64; 3],
    angle: f64,
    freq: f64,
    drift: f64,
    sprites: Vec<Sprite>,
}

fn draw_layout(h: usize, w: usize, highlights: bool, rng: &mut ChaCha8Rng) -> Layout {
    let color = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| [(); 3].map(|_| rng.random_range(lo..hi));
    let base = color(2.0, 40.0, rng);
    let tint = color(0.0, 30.0, rng);
    let (hf, wf) = (h as f64, w as f64);
    let extent = hf.min(wf);
    let mut sprites = Vec::new();
    for _ in 0..rng.random_range(2..=4) {
        let shape = if rng.random_bool(0.5) {
            Shape::Disc { r: rng.random_range(0.08..0.25) * extent }
        } else {
            Shape::Rect { hw: rng.random_range(0.06..0.2) * extent, hh: rng.random_range(0.06..0.2) * extent }
        };
        sprites.push(Sprite {
            shape,
            color: color(5.0, 180.0, rng),
            pos: (rng.random_range(0.0..hf), rng.random_range(0.0..wf)),
            vel: (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)),
        });
    }
    if highlights {
        for _ in 0..rng.random_range(1..=2) {
            let peak = rng.random_range(1500.0..4000.0);
            sprites.push(Sprite {
                shape: Shape::Blob { sigma: rng.random_range(0.04..0.08) * extent },
                color: [peak, peak * rng.random_range(0.85..1.0), peak * rng.random_range(0.8..1.0)],
                pos: (rng.random_range(0.2 * hf..0.8 * hf), rng.random_range(0.2 * wf..0.8 * wf)),
                vel: (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            });
        }
    }
    Layout {
        base,
        tint,
        angle: rng.random_range(0.0..std::f64::consts::TAU),
        freq: rng.random_range(0.5..2.0) * std::f64::consts::TAU / extent,
        drift: rng.random_range(-0.6..0.6),
        sprites,
    }
}

/// Linear BT.709 light of frame `f`: a drifting sinusoidal gradient with
/// sprites painted over it (blobs add light on top).
fn paint(layout: &Layout, h: usize, w: usize, f: usize) -> LinearFrame {
    let p = h * w;
    let mut data = vec![0.0f32; 3 * p];
    let (s, c) = layout.angle.sin_cos();
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
            let phase = layout.freq * (xf * c + yf * s) - layout.drift * f as f64;
            let g = 0.5 + 0.5 * phase.sin();
            let mut rgb = [0, 1, 2].map(|k| layout.base[k] + g * layout.tint[k]);
            for sp in &layout.sprites {
                let a = sp.weight(f, yf, xf);
                match sp.shape {
                    Shape::Blob { .. } => (0..3).for_each(|k| rgb[k] += a * sp.color[k]),
                    _ => (0..3).for_each(|k| rgb[k] = (1.0 - a) * rgb[k] + a * sp.color[k]),
                }
            }
            for k in 0..3 {
                data[k * p + y * w + x] = rgb[k] as f32;
            }
        }
    }
    LinearFrame::new(h, w, data).expect("positive extents")
}

/// HDR frames of one scene, quantized to 16 bits.
pub fn render_scene(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<EncodedFrame> {
    let layout = draw_layout(cfg.height, cfg.width, cfg.highlights, rng);
    (0..cfg.frames)
        .map(|f| {
            let bt709 = paint(&layout, cfg.height, cfg.width, f);
            quantize(&pq_oetf(&bt709_to_bt2020(&bt709)), BitDepth::Sixteen)
        })
        .collect()
}

pub fn scene_name(i: usize) -> String {
    format!("scene_{i:04}")
}

/// All scenes of `cfg` in memory, identical to what [`make_synthetic`] writes.
pub fn synthetic_pairs(cfg: &SynthConfig) -> Vec<SequencePair> {
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.scenes)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.random());
            let hdr = render_scene(cfg, &mut rng);
            let sdr = hdr.iter().map(|f| quantize(&degrade(f, cfg.curve), BitDepth::Eight)).collect();
            SequencePair::new(scene_name(i), sdr, hdr).expect("generated scenes are consistent")
        })
        .collect()
}

/// Writes `out/scene_NNNN/{sdr,hdr}/NNNN.png` and `out/manifest.txt`; returns
/// the scene directories.
pub fn make_synthetic(cfg: &SynthConfig, out: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut dirs = Vec::new();
    for pair in synthetic_pairs(cfg) {
        let dir = out.join(&pair.scene_id);
        for side in ["sdr", "hdr"] {
            fs::create_dir_all(dir.join(side)).map_err(io_err(dir.join(side)))?;
        }
        for (i, (s, h)) in pair.sdr.iter().zip(&pair.hdr).enumerate() {
            write_frame(&frame_path(&dir, "sdr", i), s, BitDepth::Eight)?;
            write_frame(&frame_path(&dir, "hdr", i), h, BitDepth::Sixteen)?;
        }
        dirs.push(dir);
    }
    write_manifest(out, &dirs)?;
    Ok(dirs)
}
