use crate::error::Result;
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;

/// Instance normalization: each (sample, channel) plane is shifted to zero
/// mean and scaled by `1/sqrt(var + eps)` (biased variance). No affine terms.
pub fn normalize(input: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let hw = h * w;
    let x = input.data();
    let mut out = vec![0.0f32; x.len()];
    let mut inv_std = vec![0.0f64; n * c];
    let mut y64 = vec![0.0f64; x.len()];
    for plane in 0..n * c {
        let src = &x[plane * hw..(plane + 1) * hw];
        let mean = src.iter().map(|&v| v as f64).sum::<f64>() / hw as f64;
        let var = src.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / hw as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        inv_std[plane] = is;
        for (i, &v) in src.iter().enumerate() {
            let y = (v as f64 - mean) * is;
            y64[plane * hw + i] = y;
            out[plane * hw + i] = y as f32;
        }
    }
    Ok(Tensor::from_op(
        "normalize",
        [n, c, h, w],
        out,
        vec![input.clone()],
        Box::new(move |gout| {
            let mut gx = vec![0.0f32; gout.len()];
            for plane in 0..n * c {
                let g = &gout[plane * hw..(plane + 1) * hw];
                let y = &y64[plane * hw..(plane + 1) * hw];
                let mean_g = g.iter().map(|&v| v as f64).sum::<f64>() / hw as f64;
                let mean_gy = g.iter().zip(y).map(|(&a, b)| a as f64 * b).sum::<f64>() / hw as f64;
                for i in 0..hw {
                    gx[plane * hw + i] = (inv_std[plane] * (g[i] as f64 - mean_g - y[i] * mean_gy)) as f32;
                }
            }
            vec![Some(gx)]
        }),
    ))
}
