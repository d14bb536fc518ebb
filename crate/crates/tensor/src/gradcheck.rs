//! Central finite-difference check of analytic gradients.
//!
//! The function under test is projected to a scalar with fixed random weights
//! `L = Σ wᵢ yᵢ`, evaluated in `f64` from the `f32` outputs. Only forward
//! passes feed the numeric side, so it is independent of every backward rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::ops::elementwise::weighted_sum;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Central-difference half step.
    pub step: f64,
    /// At most this many elements are probed per input (all if smaller).
    pub max_probes: usize,
    pub seed: u64,
    /// When nonzero, probe each input along this many random ±1 directions
    /// over all its elements instead of element by element. Suits deep
    /// stacks, where single-element slopes drown in `f32` round-off.
    pub directions: usize,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { step: 1e-3, max_probes: 48, seed: 0, directions: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOutcome {
    /// `max |analytic − numeric| / max(‖analytic‖∞, ‖numeric‖∞)` over probes.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub probes: usize,
    /// Analytic and numeric slope of every probe.
    pub samples: Vec<(f64, f64)>,
}

impl GradCheckOutcome {
    pub fn passes(&self, tol: f64) -> bool {
        self.probes > 0 && self.max_rel_err.is_finite() && self.max_rel_err < tol
    }
}

/// Uniform random tensor in `[lo, hi)`.
pub fn uniform(shape: [usize; 4], lo: f32, hi: f32, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).expect("positive extents")
}

/// Like [`uniform`] on `[-1, 1)` but keeps every value at least `margin` away
/// from zero, for inputs that feed kinked functions directly.
pub fn uniform_away_from_zero(shape: [usize; 4], margin: f32, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f32 = rng.random_range(margin..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("positive extents")
}

impl GradCheck {
    pub fn with_seed(seed: u64) -> Self {
        GradCheck { seed, ..Self::default() }
    }

    /// Compare gradients for every input with `requires_grad()` set; the other
    /// inputs are held constant.
    pub fn run<F>(&self, inputs: &[Tensor], f: F) -> Result<GradCheckOutcome>
    where
        F: Fn(&[Tensor]) -> Result<Tensor>,
    {
        // A separate stream, so projection weights never coincide with inputs
        // drawn from a generator seeded with the same value.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0x67c);
        let probe = inputs.iter().map(|t| t.requires_grad()).collect::<Vec<_>>();
        if !probe.iter().any(|&p| p) {
            return invalid("gradcheck", "no input requires a gradient");
        }

        let leaves: Vec<Tensor> =
            inputs.iter().zip(&probe).map(|(t, &p)| if p { t.detach().with_grad() } else { t.detach() }).collect();
        let y = f(&leaves)?;
        let weights: Vec<f32> = (0..y.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
        weighted_sum(&y, &weights)?.backward()?;

        let project = |xs: &[Tensor]| -> Result<f64> {
            let y = f(xs)?;
            Ok(y.data().iter().zip(&weights).map(|(&a, &w)| a as f64 * w as f64).sum())
        };

        let mut samples = Vec::new();
        let mut consts: Vec<Tensor> = inputs.iter().map(Tensor::detach).collect();
        for (slot, leaf) in leaves.iter().enumerate() {
            if !probe[slot] {
                continue;
            }
            let grad = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
            let base = leaf.to_vec();
            if self.directions > 0 {
                for _ in 0..self.directions {
                    let dir: Vec<f64> =
                        (0..base.len()).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
                    let shifted = |sign: f64| -> Vec<f32> {
                        base.iter().zip(&dir).map(|(&b, &d)| (b as f64 + sign * self.step * d) as f32).collect()
                    };
                    let (hi, lo) = (shifted(1.0), shifted(-1.0));
                    consts[slot] = Tensor::from_vec(leaf.shape(), hi.clone())?;
                    let f_hi = project(&consts)?;
                    consts[slot] = Tensor::from_vec(leaf.shape(), lo.clone())?;
                    let f_lo = project(&consts)?;
                    let n = (f_hi - f_lo) / (2.0 * self.step);
                    // Analytic slope along the displacement actually taken in f32.
                    let a = grad
                        .iter()
                        .zip(hi.iter().zip(&lo))
                        .map(|(&g, (&h, &l))| g as f64 * (h as f64 - l as f64))
                        .sum::<f64>()
                        / (2.0 * self.step);
                    samples.push((a, n));
                }
                consts[slot] = leaf.detach();
                continue;
            }
            let indices: Vec<usize> = if base.len() <= self.max_probes {
                (0..base.len()).collect()
            } else {
                rand::seq::index::sample(&mut rng, base.len(), self.max_probes).into_vec()
            };
            for idx in indices {
                let mut eval_at = |v: f32| -> Result<f64> {
                    let mut data = base.clone();
                    data[idx] = v;
                    consts[slot] = Tensor::from_vec(leaf.shape(), data)?;
                    project(&consts)
                };
                // Use the steps actually representable in f32.
                let hi = (base[idx] as f64 + self.step) as f32;
                let lo = (base[idx] as f64 - self.step) as f32;
                let (f_hi, f_lo) = (eval_at(hi)?, eval_at(lo)?);
                let n = (f_hi - f_lo) / (hi as f64 - lo as f64);
                samples.push((grad[idx] as f64, n));
            }
            consts[slot] = leaf.detach();
        }

        let max_abs_err = samples.iter().fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
        let scale = samples.iter().fold(f64::MIN_POSITIVE, |m, (a, n)| m.max(a.abs()).max(n.abs()));
        Ok(GradCheckOutcome { max_rel_err: max_abs_err / scale, max_abs_err, probes: samples.len(), samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::elementwise::{mul, sum};

    #[test]
    fn detects_a_wrong_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = uniform([1, 1, 2, 3], -1.0, 1.0, &mut rng).with_grad();
        let b = uniform([1, 1, 2, 3], -1.0, 1.0, &mut rng);
        let ok = GradCheck::default().run(&[a.clone(), b.clone()], |x| mul(&x[0], &x[1])).unwrap();
        assert!(ok.passes(1e-3), "{ok:?}");
        let bad = GradCheck::default()
            .run(&[a, b], |x| {
                let flipped = crate::ops::elementwise::scale(&x[1], -1.0);
                // Value of x0·x1, gradient of x0·(−x1).
                let fwd = mul(&x[0], &x[1])?;
                let wrong = mul(&x[0], &flipped)?;
                let corr = crate::ops::elementwise::sub(&fwd, &wrong)?.detach();
                crate::ops::elementwise::add(&wrong, &corr)
            })
            .unwrap();
        assert!(!bad.passes(1e-3));
    }

    #[test]
    fn directional_probes_catch_a_single_wrong_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = uniform([1, 2, 5, 5], -1.0, 1.0, &mut rng).with_grad();
        let gc = GradCheck { directions: 6, ..GradCheck::with_seed(4) };
        let good = gc.run(&[a.clone()], |v| mul(&v[0], &v[0])).unwrap();
        assert_eq!(good.probes, 6);
        assert!(good.passes(1e-3), "{good:?}");
        // Correct everywhere except element 7, whose gradient is doubled.
        let bad = gc
            .run(&[a], |v| {
                let sq = mul(&v[0], &v[0])?;
                let mut mask = vec![0.0; 50];
                mask[7] = 1.0;
                let m = Tensor::from_vec([1, 2, 5, 5], mask)?;
                let extra = mul(&sq, &m)?;
                let corr = extra.detach();
                crate::ops::elementwise::add(&sq, &crate::ops::elementwise::sub(&extra, &corr)?)
            })
            .unwrap();
        assert!(!bad.passes(1e-3), "{bad:?}");
    }

    #[test]
    fn rejects_when_nothing_is_probed() {
        let a = Tensor::full([1, 1, 1, 2], 1.0);
        assert!(GradCheck::default().run(&[a], |x| Ok(sum(&x[0]))).is_err());
    }
}
