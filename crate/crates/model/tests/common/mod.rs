#![allow(dead_code)]

use hdrtv_model::{DslNet, ModelConfig};
use hdrtv_tensor::{gradcheck::uniform, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn frames(cfg: &ModelConfig, n: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    (0..cfg.frames()).map(|_| uniform([n, 3, h, w], 0.0, 1.0, rng)).collect()
}

pub fn tiny() -> ModelConfig {
    ModelConfig::preset("tiny").unwrap()
}

/// Overwrites every parameter whose path satisfies `pick` with `value`.
pub fn fill_params(model: &mut DslNet, pick: impl Fn(&str) -> bool, value: f32) {
    let paths: Vec<String> = model.params().paths().filter(|p| pick(p)).cloned().collect();
    assert!(!paths.is_empty());
    for p in paths {
        let n = model.params().get(&p).unwrap().numel();
        model.params_mut().set(&p, vec![value; n]).unwrap();
    }
}

/// Direct stride-1 cross-correlation in f64 with zero padding `(k-1)/2`,
/// written independently of the tensor crate's kernels.
pub fn naive_conv(x: &[f64], shape: [usize; 4], w: &Tensor, b: Option<&Tensor>) -> (Vec<f64>, [usize; 4]) {
    let [n, cin, h, wd] = shape;
    let [cout, wcin, k, _] = w.shape();
    assert_eq!(wcin, cin);
    let pad = (k - 1) as isize / 2;
    let wv = w.data();
    let mut out = vec![0.0; n * cout * h * wd];
    for b_ in 0..n {
        for o in 0..cout {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b.map_or(0.0, |t| t.data()[o] as f64);
                    for i in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                acc += wv[((o * cin + i) * k + ky) * k + kx] as f64
                                    * x[((b_ * cin + i) * h + sy as usize) * wd + sx as usize];
                            }
                        }
                    }
                    out[((b_ * cout + o) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    (out, [n, cout, h, wd])
}

pub fn naive_layer(model: &DslNet, path: &str, x: &[f64], shape: [usize; 4]) -> (Vec<f64>, [usize; 4]) {
    let p = model.params();
    let w = p.get(&format!("{path}.weight")).unwrap();
    let b = p.get(&format!("{path}.bias")).ok();
    naive_conv(x, shape, w, b)
}

pub fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

pub fn leaky(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| if x > 0.0 { x } else { 0.1 * x }).collect()
}

pub fn as_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

pub fn max_diff(a: &[f64], b: &Tensor) -> f64 {
    assert_eq!(a.len(), b.numel());
    a.iter().zip(b.data()).map(|(x, &y)| (x - y as f64).abs()).fold(0.0, f64::max)
}
