use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Average pooling over `window×window` patches.
///
/// Padded positions are excluded from the average, so a constant input stays
/// constant for any padding.
pub fn pool_avg(input: &Tensor, window: usize, stride: usize, padding: usize) -> Result<Tensor> {
    const OP: &str = "pool_avg";
    let [n, c, h, w] = input.shape();
    if window == 0 || stride == 0 {
        return invalid(OP, "window and stride must be positive");
    }
    if padding >= window {
        return invalid(OP, format!("padding {padding} must be smaller than window {window}"));
    }
    if window > h + 2 * padding || window > w + 2 * padding {
        return shape_err(OP, format!("window {window} exceeds spatial extents {h}x{w} (padding {padding})"));
    }
    let oh = (h + 2 * padding - window) / stride + 1;
    let ow = (w + 2 * padding - window) / stride + 1;
    // Clipped input range [lo, hi) for each output coordinate.
    let span = |o: usize, len: usize| {
        let start = (o * stride) as isize - padding as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + window as isize) as usize).min(len);
        (lo, hi)
    };
    let ys: Vec<(usize, usize)> = (0..oh).map(|o| span(o, h)).collect();
    let xs: Vec<(usize, usize)> = (0..ow).map(|o| span(o, w)).collect();

    let x = input.data();
    let mut out = vec![0.0f32; n * c * oh * ow];
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1)) in ys.iter().enumerate() {
            for (ox, &(x0, x1)) in xs.iter().enumerate() {
                let mut acc = 0.0f64;
                for y in y0..y1 {
                    acc += src[y * w + x0..y * w + x1].iter().map(|&v| v as f64).sum::<f64>();
                }
                out[plane * oh * ow + oy * ow + ox] = (acc / ((y1 - y0) * (x1 - x0)) as f64) as f32;
            }
        }
    }
    Ok(Tensor::from_op(
        OP,
        [n, c, oh, ow],
        out,
        vec![input.clone()],
        Box::new(move |gout| {
            let mut gx = vec![0.0f64; n * c * h * w];
            for plane in 0..n * c {
                for (oy, &(y0, y1)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1)) in xs.iter().enumerate() {
                        let g = gout[plane * oh * ow + oy * ow + ox] as f64 / ((y1 - y0) * (x1 - x0)) as f64;
                        for y in y0..y1 {
                            for v in &mut gx[plane * h * w + y * w + x0..plane * h * w + y * w + x1] {
                                *v += g;
                            }
                        }
                    }
                }
            }
            vec![Some(gx.into_iter().map(|v| v as f32).collect())]
        }),
    ))
}

/// Mean over all spatial positions: (N, C, H, W) → (N, C, 1, 1).
pub fn pool_global(input: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let hw = h * w;
    let out: Vec<f32> =
        input.data().chunks(hw).map(|p| (p.iter().map(|&v| v as f64).sum::<f64>() / hw as f64) as f32).collect();
    Ok(Tensor::from_op(
        "pool_global",
        [n, c, 1, 1],
        out,
        vec![input.clone()],
        Box::new(move |gout| {
            let mut gx = Vec::with_capacity(n * c * hw);
            for &g in gout {
                gx.extend(std::iter::repeat_n(g / hw as f32, hw));
            }
            vec![Some(gx)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_mean() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pool_avg(&x, 2, 2, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 1, 1]);
        assert_eq!(y.item().unwrap(), 2.5);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::full([2, 3, 5, 6], 0.75);
        for (win, stride, pad) in [(2, 2, 0), (3, 1, 1), (3, 2, 1)] {
            let y = pool_avg(&x, win, stride, pad).unwrap();
            assert!(y.data().iter().all(|&v| (v - 0.75).abs() < 1e-7));
        }
        let g = pool_global(&x).unwrap();
        assert_eq!(g.shape(), [2, 3, 1, 1]);
        assert!(g.data().iter().all(|&v| (v - 0.75).abs() < 1e-7));
    }

    #[test]
    fn window_larger_than_input_is_rejected() {
        let x = Tensor::full([1, 1, 1, 1], 1.0);
        assert!(pool_avg(&x, 2, 2, 0).is_err());
    }
}
