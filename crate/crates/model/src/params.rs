use std::collections::BTreeMap;

use hdrtv_tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub path: String,
    pub shape: Shape,
    pub init: Init,
}

/// Learnable tensors keyed by module path, e.g. `stfm.res.lkrb1.dw.weight`.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    /// Draws every parameter in `layout` order from one ChaCha stream.
    pub fn init(layout: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for p in layout {
            let n = p.shape.iter().product();
            let data = match p.init {
                Init::Zero => vec![0.0; n],
                Init::FanIn(fan_in) => {
                    let b = 1.0 / (fan_in as f32).sqrt();
                    (0..n).map(|_| rng.random_range(-b..b)).collect()
                }
            };
            let t = Tensor::leaf(p.shape, data).expect("layout extents are positive");
            let clash = tensors.insert(p.path.clone(), t);
            assert!(clash.is_none(), "duplicate parameter path {}", p.path);
        }
        ParamStore { tensors }
    }

    /// Adopts `tensors` after checking they match `layout` path for path.
    pub fn from_tensors(layout: &[ParamSpec], tensors: BTreeMap<String, Tensor>) -> Result<Self, ModelError> {
        if tensors.len() != layout.len() {
            let extra: Vec<_> = tensors.keys().filter(|k| !layout.iter().any(|p| &p.path == *k)).collect();
            if let Some(k) = extra.first() {
                return Err(ModelError::UnexpectedParam((*k).clone()));
            }
        }
        for p in layout {
            let t = tensors.get(&p.path).ok_or_else(|| ModelError::MissingParam(p.path.clone()))?;
            if t.shape() != p.shape {
                return Err(ModelError::ParamShape { path: p.path.clone(), expected: p.shape, got: t.shape() });
            }
        }
        let tensors =
            tensors.into_iter().map(|(k, t)| (k, if t.requires_grad() { t } else { t.with_grad() })).collect();
        Ok(ParamStore { tensors })
    }

    pub fn get(&self, path: &str) -> Result<&Tensor, ModelError> {
        self.tensors.get(path).ok_or_else(|| ModelError::MissingParam(path.to_string()))
    }

    /// Replaces the values at `path` with a fresh leaf of the same shape.
    pub fn set(&mut self, path: &str, data: Vec<f32>) -> Result<(), ModelError> {
        let old = self.get(path)?;
        let shape = old.shape();
        if data.len() != old.numel() {
            return Err(ModelError::ParamShape { path: path.into(), expected: shape, got: [data.len(), 1, 1, 1] });
        }
        let t = Tensor::leaf(shape, data)?;
        self.tensors.insert(path.to_string(), t);
        Ok(())
    }

    /// Swaps in `t` itself (not a copy), so gradients land on the caller's tensor.
    pub fn replace(&mut self, path: &str, t: Tensor) -> Result<(), ModelError> {
        let shape = self.get(path)?.shape();
        if t.shape() != shape {
            return Err(ModelError::ParamShape { path: path.into(), expected: shape, got: t.shape() });
        }
        self.tensors.insert(path.to_string(), t);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Detached copies, e.g. for serialization.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.tensors.iter().map(|(k, t)| (k.clone(), t.detach())).collect()
    }

    pub fn zero_grads(&self) {
        self.tensors.values().for_each(Tensor::zero_grad);
    }
}
