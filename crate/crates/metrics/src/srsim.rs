//! SR-SIM (Zhang & Li, ICIP 2012): spectral-residual saliency similarity
//! weighted by gradient similarity, on luma.
//!
//! Follows the authors' MATLAB release, including its `imresize` (bicubic,
//! antialiased when shrinking, symmetric border) and filter origins.
//! Frames in `[0, 1]` are scaled to the 8-bit range first because the
//! stability constants assume it.

use rustfft::{num_complex::Complex64, FftPlanner};

use hdrtv_color::EncodedFrame;

use crate::MetricError;

/// Constants of the reference release.
pub const C1: f64 = 0.40;
pub const C2: f64 = 225.0;
pub const ALPHA: f64 = 0.50;
pub const SALIENCY_SCALE: f64 = 0.25;
pub const GAUSS_SIZE: usize = 10;
pub const GAUSS_SIGMA: f64 = 3.8;
/// Smallest luma extent accepted (after the dyadic-ish pre-downsample).
pub const MIN_EXTENT: usize = 8;

/// Row-major single-channel image.
#[derive(Debug, Clone)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn at(&self, y: usize, x: usize) -> f64 {
        self.v[y * self.w + x]
    }
}

fn luma255(f: &EncodedFrame) -> Plane {
    let (r, g, b) = (f.plane(0), f.plane(1), f.plane(2));
    let v =
        (0..f.pixels()).map(|i| 255.0 * (0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64)).collect();
    Plane { h: f.height(), w: f.width(), v }
}

/// Correlation with zero padding; origin at `(k+1)/2 - 1` per axis.
fn filter_zero(p: &Plane, k: &[f64], kh: usize, kw: usize) -> Plane {
    let (cy, cx) = ((kh + 1) / 2 - 1, (kw + 1) / 2 - 1);
    let mut out = vec![0.0; p.h * p.w];
    for y in 0..p.h {
        for x in 0..p.w {
            let mut acc = 0.0;
            for u in 0..kh {
                let sy = y as isize + u as isize - cy as isize;
                if sy < 0 || sy >= p.h as isize {
                    continue;
                }
                for v in 0..kw {
                    let sx = x as isize + v as isize - cx as isize;
                    if sx >= 0 && sx < p.w as isize {
                        acc += k[u * kw + v] * p.at(sy as usize, sx as usize);
                    }
                }
            }
            out[y * p.w + x] = acc;
        }
    }
    Plane { h: p.h, w: p.w, v: out }
}

/// `F×F` box filter in `conv2(..., 'same')` placement, then keep every F-th
/// sample starting at the first.
fn box_downsample(p: &Plane, f: usize) -> Plane {
    // conv2 'same' with an f-tap box covers [i - (ceil(f/2)-1), i + floor(f/2)];
    // the equivalent correlation origin is ceil(f/2)-1, i.e. (f+1)/2 - 1.
    let k = vec![1.0 / (f * f) as f64; f * f];
    let full = filter_zero(p, &k, f, f);
    let (h, w) = (p.h.div_ceil(f), p.w.div_ceil(f));
    let mut v = Vec::with_capacity(h * w);
    for y in (0..p.h).step_by(f) {
        for x in (0..p.w).step_by(f) {
            v.push(full.at(y, x));
        }
    }
    Plane { h, w, v }
}

fn cubic(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        1.5 * a.powi(3) - 2.5 * a * a + 1.0
    } else if a <= 2.0 {
        -0.5 * a.powi(3) + 2.5 * a * a - 4.0 * a + 2.0
    } else {
        0.0
    }
}

/// Per-output (source indices, weights) of a 1-D bicubic resize.
fn resize_taps(n_in: usize, n_out: usize, scale: f64) -> Vec<Vec<(usize, f64)>> {
    let (width, kscale) = if scale < 1.0 { (4.0 / scale, scale) } else { (4.0, 1.0) };
    let taps = width.ceil() as isize + 2;
    (1..=n_out)
        .map(|i| {
            let u = i as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let left = (u - width / 2.0).floor() as isize;
            let mut row: Vec<(usize, f64)> = (0..taps)
                .map(|j| {
                    let idx = left + j;
                    let wgt = kscale * cubic(kscale * (u - idx as f64));
                    // symmetric extension of the 1-based index
                    let period = 2 * n_in as isize;
                    let m = (idx - 1).rem_euclid(period);
                    let src = if m < n_in as isize { m } else { period - 1 - m };
                    (src as usize, wgt)
                })
                .collect();
            let total: f64 = row.iter().map(|t| t.1).sum();
            row.iter_mut().for_each(|t| t.1 /= total);
            row
        })
        .collect()
}

fn imresize(p: &Plane, h: usize, w: usize, scale: (f64, f64)) -> Plane {
    let ty = resize_taps(p.h, h, scale.0);
    let tx = resize_taps(p.w, w, scale.1);
    // rows first, then columns
    let mut mid = vec![0.0; h * p.w];
    for (oy, taps) in ty.iter().enumerate() {
        for &(sy, wt) in taps {
            for x in 0..p.w {
                mid[oy * p.w + x] += wt * p.at(sy, x);
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (ox, taps) in tx.iter().enumerate() {
            out[y * w + ox] = taps.iter().map(|&(sx, wt)| wt * mid[y * p.w + sx]).sum();
        }
    }
    Plane { h, w, v: out }
}

fn fft2(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for r in data.chunks_exact_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
    if inverse {
        let n = (h * w) as f64;
        data.iter_mut().for_each(|v| *v /= n);
    }
}

/// 3×3 mean with replicated borders.
fn mean3_replicate(p: &Plane) -> Plane {
    let mut v = vec![0.0; p.h * p.w];
    for y in 0..p.h {
        for x in 0..p.w {
            let mut acc = 0.0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let sy = (y as isize + dy).clamp(0, p.h as isize - 1) as usize;
                    let sx = (x as isize + dx).clamp(0, p.w as isize - 1) as usize;
                    acc += p.at(sy, sx);
                }
            }
            v[y * p.w + x] = acc / 9.0;
        }
    }
    Plane { h: p.h, w: p.w, v }
}

fn gaussian_kernel() -> Vec<f64> {
    let c = (GAUSS_SIZE as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..GAUSS_SIZE * GAUSS_SIZE)
        .map(|i| {
            let (y, x) = ((i / GAUSS_SIZE) as f64 - c, (i % GAUSS_SIZE) as f64 - c);
            (-(x * x + y * y) / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn saliency(y: &Plane) -> Plane {
    let (sh, sw) = ((y.h as f64 * SALIENCY_SCALE).ceil() as usize, (y.w as f64 * SALIENCY_SCALE).ceil() as usize);
    let small = imresize(y, sh, sw, (SALIENCY_SCALE, SALIENCY_SCALE));
    let mut spec: Vec<Complex64> = small.v.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spec, sh, sw, false);
    // An exactly-zero bin would give log(0) = -inf and poison the local mean.
    let log_amp = Plane { h: sh, w: sw, v: spec.iter().map(|c| c.norm().max(f64::EPSILON).ln()).collect() };
    let local = mean3_replicate(&log_amp);
    let mut rebuilt: Vec<Complex64> = spec
        .iter()
        .zip(log_amp.v.iter().zip(&local.v))
        .map(|(c, (la, lm))| Complex64::from_polar((la - lm).exp(), c.arg()))
        .collect();
    fft2(&mut rebuilt, sh, sw, true);
    let energy = Plane { h: sh, w: sw, v: rebuilt.iter().map(|c| c.norm_sqr()).collect() };
    let mut smooth = filter_zero(&energy, &gaussian_kernel(), GAUSS_SIZE, GAUSS_SIZE);
    let (lo, hi) = smooth.v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        smooth.v.iter_mut().for_each(|v| *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0));
    } else {
        smooth.v.fill(1.0);
    }
    imresize(&smooth, y.h, y.w, (y.h as f64 / sh as f64, y.w as f64 / sw as f64))
}

fn gradient_magnitude(y: &Plane) -> Plane {
    const DX: [f64; 9] = [3.0, 0.0, -3.0, 10.0, 0.0, -10.0, 3.0, 0.0, -3.0];
    const DY: [f64; 9] = [3.0, 10.0, 3.0, 0.0, 0.0, 0.0, -3.0, -10.0, -3.0];
    let gx = filter_zero(y, &DX.map(|v| v / 16.0), 3, 3);
    let gy = filter_zero(y, &DY.map(|v| v / 16.0), 3, 3);
    Plane { h: y.h, w: y.w, v: gx.v.iter().zip(&gy.v).map(|(a, b)| (a * a + b * b).sqrt()).collect() }
}

/// Symmetric in its arguments; `srsim(x, x) = 1`.
pub fn srsim(a: &EncodedFrame, b: &EncodedFrame) -> Result<f64, MetricError> {
    a.same_extents(b)?;
    let (mut ya, mut yb) = (luma255(a), luma255(b));
    let f = ((ya.h.min(ya.w) as f64 / 256.0).round() as usize).max(1);
    if f > 1 {
        ya = box_downsample(&ya, f);
        yb = box_downsample(&yb, f);
    }
    if ya.h.min(ya.w) < MIN_EXTENT {
        return Err(MetricError::TooSmall { height: a.height(), width: a.width(), min: MIN_EXTENT });
    }
    let (sa, sb) = (saliency(&ya), saliency(&yb));
    let (ga, gb) = (gradient_magnitude(&ya), gradient_magnitude(&yb));
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..ya.v.len() {
        let (s1, s2, g1, g2) = (sa.v[i], sb.v[i], ga.v[i], gb.v[i]);
        let s_sim = (2.0 * s1 * s2 + C1) / (s1 * s1 + s2 * s2 + C1);
        let g_sim = (2.0 * g1 * g2 + C2) / (g1 * g1 + g2 * g2 + C2);
        let wgt = s1.max(s2);
        num += s_sim * g_sim.powf(ALPHA) * wgt;
        den += wgt;
    }
    Ok(num / den)
}
