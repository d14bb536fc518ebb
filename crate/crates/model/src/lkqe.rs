use hdrtv_tensor::{relu, ConvSpec, Tensor};

use crate::config::ModelConfig;
use crate::layers::{chain, Conv, Lkrb};
use crate::params::{ParamSpec, ParamStore};
use crate::ModelError;

/// `Conv3×3 → ReLU → n×LKRB`, ahead of the output head.
#[derive(Debug, Clone, PartialEq)]
pub struct Lkqe {
    pub stem: Conv,
    pub blocks: Vec<Lkrb>,
}

impl Lkqe {
    pub fn new(cfg: &ModelConfig) -> Self {
        let c = cfg.c_feat;
        Lkqe {
            stem: Conv::new("lkqe.stem", ConvSpec::new(c, c, 3)),
            blocks: (0..cfg.n_lkrb_lkqe).map(|i| Lkrb::new(&format!("lkqe.lkrb{i}"), c, true)).collect(),
        }
    }

    pub fn params(&self, out: &mut Vec<ParamSpec>) {
        self.stem.params(out);
        self.blocks.iter().for_each(|b| b.params(out));
    }

    pub fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<Tensor, ModelError> {
        chain(&self.blocks, p, relu(&self.stem.forward(p, x)?))
    }
}
