use std::collections::BTreeMap;

use hdrtv_tensor::{clamp, concat_channels, ConvSpec, OffsetField, Tensor};

use crate::config::ModelConfig;
use crate::dmfa::Dmfa;
use crate::layers::Conv;
use crate::lkqe::Lkqe;
use crate::params::{ParamSpec, ParamStore};
use crate::stfm::{Stfm, StfmOutput};
use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Raw head output, differentiable.
    Train,
    /// Output clamped to `[0, 1]`.
    Inference,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub offsets: Option<OffsetField>,
    pub aligned: Tensor,
    pub stfm: StfmOutput,
    pub enhanced: Tensor,
    pub output: Tensor,
}

#[derive(Debug, Clone)]
struct Graph {
    dmfa: Dmfa,
    stfm: Stfm,
    lkqe: Option<Lkqe>,
    head: Conv,
}

impl Graph {
    fn new(cfg: &ModelConfig) -> Self {
        Graph {
            dmfa: Dmfa::new(cfg),
            stfm: Stfm::new(cfg),
            lkqe: cfg.toggles.lkqe.then(|| Lkqe::new(cfg)),
            head: Conv::new("head", ConvSpec::new(cfg.c_feat, 3, 3)),
        }
    }

    fn layout(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        self.dmfa.params(&mut out);
        self.stfm.params(&mut out);
        if let Some(l) = &self.lkqe {
            l.params(&mut out);
        }
        self.head.params(&mut out);
        out
    }
}

/// The full network: alignment, modulation, enhancement, 3-channel head.
#[derive(Debug, Clone)]
pub struct DslNet {
    config: ModelConfig,
    graph: Graph,
    params: ParamStore,
}

impl DslNet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let graph = Graph::new(&config);
        let params = ParamStore::init(&graph.layout(), seed);
        Ok(DslNet { config, graph, params })
    }

    pub fn from_params(config: ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let graph = Graph::new(&config);
        let params = ParamStore::from_tensors(&graph.layout(), tensors)?;
        Ok(DslNet { config, graph, params })
    }

    /// Parameter paths, extents and initializers in initialization order.
    pub fn layout(config: &ModelConfig) -> Vec<ParamSpec> {
        Graph::new(config).layout()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn dmfa(&self) -> &Dmfa {
        &self.graph.dmfa
    }

    pub fn stfm(&self) -> &Stfm {
        &self.graph.stfm
    }

    pub fn lkqe(&self) -> Option<&Lkqe> {
        self.graph.lkqe.as_ref()
    }

    pub fn head(&self) -> &Conv {
        &self.graph.head
    }

    /// Checks count, channel and extent requirements of a frame window.
    pub fn check_window(&self, frames: &[Tensor]) -> Result<(), ModelError> {
        let expected = self.config.frames();
        if frames.len() != expected {
            return Err(ModelError::FrameCount { expected, got: frames.len(), t: self.config.t });
        }
        let shape = frames[0].shape();
        if shape[1] != 3 {
            return Err(ModelError::Config(format!("frames must have 3 channels, got {}", shape[1])));
        }
        if let Some(f) = frames.iter().find(|f| f.shape() != shape) {
            return Err(ModelError::Config(format!("window frames differ in shape: {:?} vs {shape:?}", f.shape())));
        }
        let m = self.config.extent_multiple();
        if shape[2] % m != 0 || shape[3] % m != 0 {
            return Err(ModelError::Extents {
                height: shape[2],
                width: shape[3],
                detail: format!("preset {} needs extents divisible by {m}", self.config.preset),
            });
        }
        Ok(())
    }

    pub fn trace(&self, frames: &[Tensor]) -> Result<Trace, ModelError> {
        self.check_window(frames)?;
        let p = &self.params;
        let x = if frames.len() == 1 { frames[0].clone() } else { concat_channels(frames)? };
        let (offsets, aligned) = self.graph.dmfa.forward(p, &x)?;
        let stfm = self.graph.stfm.forward(p, &aligned, frames, self.config.t)?;
        let enhanced = match &self.graph.lkqe {
            Some(l) => l.forward(p, &stfm.f_modulated)?,
            None => stfm.f_modulated.clone(),
        };
        let output = self.graph.head.forward(p, &enhanced)?;
        Ok(Trace { offsets, aligned, stfm, enhanced, output })
    }

    /// Center-frame HDR estimate for a window of `2T+1` frames, each (N, 3, H, W).
    pub fn forward(&self, frames: &[Tensor], mode: Mode) -> Result<Tensor, ModelError> {
        let y = self.trace(frames)?.output;
        Ok(match mode {
            Mode::Train => y,
            Mode::Inference => clamp(&y, 0.0, 1.0),
        })
    }
}
