use crate::error::{invalid, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LEAKY_SLOPE: f32 = 0.1;

fn pointwise(
    name: &'static str,
    input: &Tensor,
    f: impl Fn(f32) -> f32,
    df: impl Fn(f32) -> f32 + Send + Sync + 'static,
) -> Tensor {
    let out: Vec<f32> = input.data().iter().map(|&v| f(v)).collect();
    let xi = input.clone();
    Tensor::from_op(
        name,
        input.shape(),
        out,
        vec![input.clone()],
        Box::new(move |gout| vec![Some(xi.data().iter().zip(gout).map(|(&x, &g)| g * df(x)).collect())]),
    )
}

/// `max(x, 0)`; the subgradient at 0 is taken as 0.
pub fn relu(input: &Tensor) -> Tensor {
    pointwise("relu", input, |v| v.max(0.0), |v| if v > 0.0 { 1.0 } else { 0.0 })
}

pub fn leaky_relu(input: &Tensor, slope: f32) -> Tensor {
    pointwise(
        "leaky_relu",
        input,
        move |v| if v > 0.0 { v } else { slope * v },
        move |v| if v > 0.0 { 1.0 } else { slope },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
    /// Half-pixel centers, edge clamped (`align_corners = false`).
    Bilinear,
}

/// Per-axis source taps for bilinear resampling by an integer factor.
fn bilinear_taps(len: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..len * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Spatial upsampling by a positive integer factor.
pub fn upsample(input: &Tensor, factor: usize, mode: UpsampleMode) -> Result<Tensor> {
    if factor == 0 {
        return invalid("upsample", "factor must be positive");
    }
    let [n, c, h, w] = input.shape();
    let (oh, ow) = (h * factor, w * factor);
    let x = input.data();
    let mut out = vec![0.0f32; n * c * oh * ow];
    match mode {
        UpsampleMode::Nearest => {
            for plane in 0..n * c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        out[plane * oh * ow + oy * ow + ox] = x[plane * h * w + (oy / factor) * w + ox / factor];
                    }
                }
            }
            Ok(Tensor::from_op(
                "upsample_nearest",
                [n, c, oh, ow],
                out,
                vec![input.clone()],
                Box::new(move |gout| {
                    let mut gx = vec![0.0f64; n * c * h * w];
                    for plane in 0..n * c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                gx[plane * h * w + (oy / factor) * w + ox / factor] +=
                                    gout[plane * oh * ow + oy * ow + ox] as f64;
                            }
                        }
                    }
                    vec![Some(gx.into_iter().map(|v| v as f32).collect())]
                }),
            ))
        }
        UpsampleMode::Bilinear => {
            let ty = bilinear_taps(h, factor);
            let tx = bilinear_taps(w, factor);
            for plane in 0..n * c {
                let src = &x[plane * h * w..(plane + 1) * h * w];
                for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                        let v = (1.0 - ly) * ((1.0 - lx) * src[y0 * w + x0] as f64 + lx * src[y0 * w + x1] as f64)
                            + ly * ((1.0 - lx) * src[y1 * w + x0] as f64 + lx * src[y1 * w + x1] as f64);
                        out[plane * oh * ow + oy * ow + ox] = v as f32;
                    }
                }
            }
            Ok(Tensor::from_op(
                "upsample_bilinear",
                [n, c, oh, ow],
                out,
                vec![input.clone()],
                Box::new(move |gout| {
                    let mut gx = vec![0.0f64; n * c * h * w];
                    for plane in 0..n * c {
                        let dst = &mut gx[plane * h * w..(plane + 1) * h * w];
                        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                                let g = gout[plane * oh * ow + oy * ow + ox] as f64;
                                dst[y0 * w + x0] += g * (1.0 - ly) * (1.0 - lx);
                                dst[y0 * w + x1] += g * (1.0 - ly) * lx;
                                dst[y1 * w + x0] += g * ly * (1.0 - lx);
                                dst[y1 * w + x1] += g * ly * lx;
                            }
                        }
                    }
                    vec![Some(gx.into_iter().map(|v| v as f32).collect())]
                }),
            ))
        }
    }
}
