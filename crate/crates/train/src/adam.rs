use std::collections::BTreeMap;

use hdrtv_model::ParamStore;
use hdrtv_tensor::Tensor;

use crate::config::AdamConfig;
use crate::TrainError;

/// Bias-corrected Adam. Moments are kept in `f32` like the parameters, so a
/// checkpoint captures the optimizer state exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    /// Completed updates.
    pub t: u64,
    moments: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

const M: &str = "adam.m.";
const V: &str = "adam.v.";

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, t: 0, moments: BTreeMap::new() }
    }

    /// Applies one update from the gradients accumulated on `params`; a
    /// parameter without a gradient counts as zero gradient. Nothing is
    /// changed if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64, clip: Option<f64>) -> Result<(), TrainError> {
        let mut grads = Vec::with_capacity(params.len());
        let mut norm2 = 0.0f64;
        for (path, p) in params.iter() {
            let g = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteGradient { path: path.clone(), index: i, value: g[i] });
            }
            norm2 += g.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
            grads.push((path.clone(), g));
        }
        let factor = match clip {
            Some(c) if norm2.sqrt() > c => c / norm2.sqrt(),
            _ => 1.0,
        };

        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (path, g) in grads {
            let theta = params.get(&path)?.to_vec();
            let (m, v) = self.moments.entry(path.clone()).or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let mut next = Vec::with_capacity(theta.len());
            for i in 0..theta.len() {
                let gi = g[i] as f64 * factor;
                let mi = beta1 * m[i] as f64 + (1.0 - beta1) * gi;
                let vi = beta2 * v[i] as f64 + (1.0 - beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                next.push((theta[i] as f64 - update) as f32);
            }
            params.set(&path, next)?;
        }
        Ok(())
    }

    /// Moments as checkpoint records `adam.m.<path>` / `adam.v.<path>`.
    pub fn to_records(&self, params: &ParamStore) -> Result<BTreeMap<String, Tensor>, TrainError> {
        let mut out = BTreeMap::new();
        for (path, (m, v)) in &self.moments {
            let shape = params.get(path)?.shape();
            out.insert(format!("{M}{path}"), Tensor::from_vec(shape, m.clone())?);
            out.insert(format!("{V}{path}"), Tensor::from_vec(shape, v.clone())?);
        }
        Ok(out)
    }

    /// Inverse of [`Adam::to_records`]; every record must match a parameter.
    pub fn from_records(
        cfg: AdamConfig,
        t: u64,
        records: &BTreeMap<String, Tensor>,
        params: &ParamStore,
    ) -> Result<Self, TrainError> {
        let mut moments: BTreeMap<String, (Vec<f32>, Vec<f32>)> = BTreeMap::new();
        for (key, tensor) in records {
            let (path, first) = if let Some(p) = key.strip_prefix(M) {
                (p, true)
            } else if let Some(p) = key.strip_prefix(V) {
                (p, false)
            } else {
                return Err(TrainError::Checkpoint(format!("unknown auxiliary record {key}")));
            };
            if params.get(path)?.shape() != tensor.shape() {
                return Err(TrainError::Checkpoint(format!("{key}: shape differs from the parameter")));
            }
            let slot = moments.entry(path.to_string()).or_default();
            if first {
                slot.0 = tensor.to_vec();
            } else {
                slot.1 = tensor.to_vec();
            }
        }
        if let Some((p, _)) = moments.iter().find(|(_, (m, v))| m.len() != v.len()) {
            return Err(TrainError::Checkpoint(format!("{p}: first and second moments do not pair up")));
        }
        Ok(Adam { cfg, t, moments })
    }
}
