use crate::error::{invalid, shape_err, Result};
use crate::kernels::{depthwise_plane, depthwise_plane_backward, pad_plane, to_f64, unpad_add};
use crate::tensor::Tensor;

fn softmax(logits: &[f32]) -> Vec<f64> {
    let m = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let e: Vec<f64> = logits.iter().map(|&l| (l as f64 - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `Σ_k a_k · kernels[k]`, each candidate holding `size` values.
fn mix(kernels: &[f64], a: &[f64], size: usize) -> Vec<f64> {
    let mut eff = vec![0.0f64; size];
    for (cand, &ak) in kernels.chunks_exact(size).zip(a) {
        for (e, kv) in eff.iter_mut().zip(cand) {
            *e += ak * kv;
        }
    }
    eff
}

/// Content-adaptive depthwise convolution.
///
/// `kernels` holds K candidate depthwise kernels with shape (K, C, k, k);
/// `logits` has shape (N, K, 1, 1). Each batch item is convolved with
/// `Σ_k softmax(logits[n])_k · kernels[k]`, padding `(k-1)/2`.
/// Differentiable through the input, the candidates and the logits.
pub fn dynamic_conv2d(input: &Tensor, kernels: &Tensor, logits: &Tensor) -> Result<Tensor> {
    const OP: &str = "dynamic_conv2d";
    let [n, c, h, w] = input.shape();
    let [kcount, kc, kh, kw] = kernels.shape();
    if kcount == 0 {
        return invalid(OP, "at least one candidate kernel is required");
    }
    if kc != c {
        return shape_err(OP, format!("candidate kernels have channel dimension {kc}, input has {c}"));
    }
    if kh != kw || kh % 2 == 0 {
        return invalid(OP, format!("candidate kernels must be square with odd size, got {kh}x{kw}"));
    }
    if logits.shape() != [n, kcount, 1, 1] {
        return shape_err(
            OP,
            format!("attention logits have shape {:?}, expected [{n}, {kcount}, 1, 1]", logits.shape()),
        );
    }
    let k = kh;
    let kk = k * k;
    let pad = (k - 1) / 2;
    let kern = to_f64(kernels.data());
    let attn: Vec<Vec<f64>> = (0..n).map(|b| softmax(&logits.data()[b * kcount..(b + 1) * kcount])).collect();

    let x = input.data();
    let mut out = vec![0.0f32; x.len()];
    let mut acc = vec![0.0f64; h * w];
    for b in 0..n {
        let eff = mix(&kern, &attn[b], c * kk);
        for ch in 0..c {
            let idx = (b * c + ch) * h * w;
            let padded = pad_plane(&x[idx..idx + h * w], h, w, pad);
            depthwise_plane(&padded, h, w, k, &eff[ch * kk..(ch + 1) * kk], &mut acc);
            for (d, a) in out[idx..idx + h * w].iter_mut().zip(&acc) {
                *d = *a as f32;
            }
        }
    }

    let (xi, kt, li) = (input.clone(), kernels.clone(), logits.clone());
    Ok(Tensor::from_op(
        OP,
        [n, c, h, w],
        out,
        vec![input.clone(), kernels.clone(), logits.clone()],
        Box::new(move |gout| {
            let x = xi.data();
            let need_x = xi.requires_grad();
            let mut gx = vec![0.0f32; if need_x { x.len() } else { 0 }];
            let mut gk = vec![0.0f64; kern.len()];
            let mut gl = vec![0.0f32; li.numel()];
            let mut gpad = vec![0.0f64; (h + 2 * pad) * (w + 2 * pad)];
            for b in 0..n {
                let a = &attn[b];
                let eff = mix(&kern, a, c * kk);
                let mut geff = vec![0.0f64; c * kk];
                for ch in 0..c {
                    let idx = (b * c + ch) * h * w;
                    let padded = pad_plane(&x[idx..idx + h * w], h, w, pad);
                    gpad.fill(0.0);
                    depthwise_plane_backward(
                        &padded,
                        &gout[idx..idx + h * w],
                        h,
                        w,
                        k,
                        &eff[ch * kk..(ch + 1) * kk],
                        need_x.then_some(gpad.as_mut_slice()),
                        Some(&mut geff[ch * kk..(ch + 1) * kk]),
                    );
                    if need_x {
                        unpad_add(&gpad, h, w, pad, &mut gx[idx..idx + h * w]);
                    }
                }
                let mut ga = vec![0.0f64; kcount];
                for ki in 0..kcount {
                    let cand = &kern[ki * c * kk..(ki + 1) * c * kk];
                    ga[ki] = geff.iter().zip(cand).map(|(g, v)| g * v).sum();
                    for (gkv, g) in gk[ki * c * kk..(ki + 1) * c * kk].iter_mut().zip(&geff) {
                        *gkv += a[ki] * g;
                    }
                }
                let dot: f64 = a.iter().zip(&ga).map(|(p, g)| p * g).sum();
                for ki in 0..kcount {
                    gl[b * kcount + ki] = (a[ki] * (ga[ki] - dot)) as f32;
                }
            }
            vec![need_x.then_some(gx), kt.requires_grad().then(|| gk.into_iter().map(|v| v as f32).collect()), Some(gl)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::zeros([1, 2, 4, 4]);
        let k = Tensor::zeros([1, 3, 3, 3]);
        let l = Tensor::zeros([1, 1, 1, 1]);
        assert!(dynamic_conv2d(&x, &k, &l).is_err());
    }

    #[test]
    fn softmax_is_normalized() {
        let a = softmax(&[1.0, 2.0, -3.0, 0.5]);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
