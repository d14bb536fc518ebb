//! Multi-frame alignment: a large-kernel offset estimator drives a
//! deformable 3×3 convolution over the channel-stacked window.

use hdrtv_tensor::{
    deformable_conv2d, dynamic_conv2d, offset_channels, pool_global, relu, ConvSpec, OffsetField, Tensor,
};

use crate::config::{ModelConfig, DEFORM_K, DYN_K, LARGE_K};
use crate::layers::Conv;
use crate::params::{Init, ParamSpec, ParamStore};
use crate::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub enum Mixer {
    /// Softmax attention over `k` candidate depthwise kernels.
    Dynamic {
        kernels: String,
        k: usize,
        channels: usize,
        attn_a: Conv,
        attn_b: Conv,
    },
    Static(Conv),
}

/// Offset estimator: conv3×3/2 → ReLU → DW17 → 7×7 mixer → DW17 → ReLU →
/// transposed conv ×2 → ReLU → zero-initialized 1×1 projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Ldoe {
    pub down: Conv,
    pub dw_a: Conv,
    pub mixer: Mixer,
    pub dw_b: Conv,
    pub up: Conv,
    pub proj: Conv,
    pub deform_groups: usize,
}

impl Ldoe {
    pub fn new(cfg: &ModelConfig) -> Self {
        let co = cfg.c_offset;
        let mixer = if cfg.toggles.dynamic_offset {
            let h = cfg.attention_hidden();
            Mixer::Dynamic {
                kernels: "dmfa.ldoe.dyn.kernels".into(),
                k: cfg.dyn_k,
                channels: co,
                attn_a: Conv::new("dmfa.ldoe.dyn.attn_a", ConvSpec::new(co, h, 1)),
                attn_b: Conv::new("dmfa.ldoe.dyn.attn_b", ConvSpec::new(h, cfg.dyn_k, 1)),
            }
        } else {
            Mixer::Static(Conv::new("dmfa.ldoe.dw7", ConvSpec::depthwise(co, DYN_K)))
        };
        let taps = offset_channels((DEFORM_K, DEFORM_K), cfg.deform_groups);
        Ldoe {
            down: Conv::new("dmfa.ldoe.down", ConvSpec::new(cfg.in_channels(), co, 3).stride(2)),
            dw_a: Conv::new("dmfa.ldoe.dw_a", ConvSpec::depthwise(co, LARGE_K)),
            mixer,
            dw_b: Conv::new("dmfa.ldoe.dw_b", ConvSpec::depthwise(co, LARGE_K)),
            up: Conv::transposed("dmfa.ldoe.up", ConvSpec::new(co, co, 4).stride(2).padding(1), 0),
            proj: Conv::new("dmfa.ldoe.proj", ConvSpec::new(co, taps, 1)).zero_init(),
            deform_groups: cfg.deform_groups,
        }
    }

    pub fn params(&self, out: &mut Vec<ParamSpec>) {
        self.down.params(out);
        self.dw_a.params(out);
        match &self.mixer {
            Mixer::Dynamic { kernels, k, channels, attn_a, attn_b } => {
                out.push(ParamSpec {
                    path: kernels.clone(),
                    shape: [*k, *channels, DYN_K, DYN_K],
                    init: Init::FanIn(DYN_K * DYN_K),
                });
                attn_a.params(out);
                attn_b.params(out);
            }
            Mixer::Static(c) => c.params(out),
        }
        self.dw_b.params(out);
        self.up.params(out);
        self.proj.params(out);
    }

    /// Offsets for a 3×3 deformable kernel at the input resolution.
    pub fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<OffsetField, ModelError> {
        let [_, _, h, w] = x.shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(ModelError::Extents {
                height: h,
                width: w,
                detail: "the offset estimator halves and restores the resolution, so both extents must be even".into(),
            });
        }
        let f = relu(&self.down.forward(p, x)?);
        let f = self.dw_a.forward(p, &f)?;
        let f = match &self.mixer {
            Mixer::Dynamic { kernels, attn_a, attn_b, .. } => {
                let a = relu(&attn_a.forward(p, &pool_global(&f)?)?);
                let logits = attn_b.forward(p, &a)?;
                dynamic_conv2d(&f, p.get(kernels)?, &logits)?
            }
            Mixer::Static(c) => c.forward(p, &f)?,
        };
        let f = relu(&self.dw_b.forward(p, &f)?);
        let f = relu(&self.up.forward(p, &f)?);
        let off = self.proj.forward(p, &f)?;
        Ok(OffsetField::new(off, (DEFORM_K, DEFORM_K), self.deform_groups)?)
    }
}

/// Fusion of the stacked frames into `c_feat` aligned features. With the
/// estimator switched off this is a plain 3×3 convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmfa {
    pub ldoe: Option<Ldoe>,
    pub fuse: Conv,
}

impl Dmfa {
    pub fn new(cfg: &ModelConfig) -> Self {
        Dmfa {
            ldoe: cfg.toggles.align.then(|| Ldoe::new(cfg)),
            fuse: Conv::new("dmfa.fuse", ConvSpec::new(cfg.in_channels(), cfg.c_feat, DEFORM_K)),
        }
    }

    pub fn params(&self, out: &mut Vec<ParamSpec>) {
        if let Some(l) = &self.ldoe {
            l.params(out);
        }
        self.fuse.params(out);
    }

    /// Returns the offsets (when aligning) and the aligned features.
    pub fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<(Option<OffsetField>, Tensor), ModelError> {
        match &self.ldoe {
            None => Ok((None, self.fuse.forward(p, x)?)),
            Some(ldoe) => {
                let off = ldoe.forward(p, x)?;
                let w = p.get(&self.fuse.weight_path())?;
                let b = p.get(&self.fuse.bias_path())?;
                let y = deformable_conv2d(x, &off, &self.fuse.spec, w, Some(b))?;
                Ok((Some(off), y))
            }
        }
    }
}
