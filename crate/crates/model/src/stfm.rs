//! Spatial-temporal feature modulation: a condition network estimates
//! scale/shift pairs that modulate a 1×1 conv stack, alongside a
//! large-kernel residual branch.

use hdrtv_tensor::{
    add, add_scalar, concat_channels, leaky_relu, modulate, narrow_channels, normalize, pool_avg, pool_global, relu,
    upsample, ConvSpec, Tensor, UpsampleMode, DEFAULT_LEAKY_SLOPE,
};

use crate::config::{ModelConfig, COLOR_BLOCKS, MOD_REPEATS};
use crate::layers::{chain, Conv, Lkrb};
use crate::params::{ParamSpec, ParamStore};
use crate::ModelError;

fn leaky(x: &Tensor) -> Tensor {
    leaky_relu(x, DEFAULT_LEAKY_SLOPE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulationKind {
    Temporal,
    Current,
    Spatial,
}

/// Scale and shift of one affine modulation. Temporal and current vectors
/// are (N, C, 1, 1); spatial ones match the modulated features.
#[derive(Debug, Clone)]
pub struct ModulationVector {
    pub scale: Tensor,
    pub shift: Tensor,
    pub kind: ModulationKind,
}

impl ModulationVector {
    /// Splits a packed `2C`-channel head output; the scale half is offset by
    /// +1 so a zero head means identity.
    pub fn from_packed(raw: &Tensor, kind: ModulationKind) -> Result<Self, ModelError> {
        let c2 = raw.shape()[1];
        if c2 % 2 != 0 {
            return Err(ModelError::Config(format!("packed modulation has odd channel count {c2}")));
        }
        let scale = add_scalar(&narrow_channels(raw, 0, c2 / 2)?, 1.0);
        let shift = narrow_channels(raw, c2 / 2, c2 / 2)?;
        Ok(ModulationVector { scale, shift, kind })
    }

    /// Same values cut from the graph.
    pub fn detached(&self) -> Self {
        ModulationVector { scale: self.scale.detach(), shift: self.shift.detach(), kind: self.kind }
    }

    pub fn identity(shape: [usize; 4], kind: ModulationKind) -> Self {
        ModulationVector { scale: Tensor::full(shape, 1.0), shift: Tensor::zeros(shape), kind }
    }
}

/// `f ⊙ scale + shift`, broadcasting per-channel vectors over space.
pub fn apply_modulation(f: &Tensor, v: &ModulationVector) -> Result<Tensor, ModelError> {
    Ok(modulate(f, &v.scale, &v.shift)?)
}

/// `Conv1×1(AvgPool2×2/2(LeakyReLU(Norm(x))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorBlock {
    pub conv: Conv,
}

impl ColorBlock {
    pub fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<Tensor, ModelError> {
        let [_, _, h, w] = x.shape();
        if h < 2 || w < 2 {
            return Err(ModelError::Extents { height: h, width: w, detail: "color block pools 2×2".into() });
        }
        let y = pool_avg(&leaky(&normalize(x)?), 2, 2, 0)?;
        self.conv.forward(p, &y)
    }
}

/// Four color blocks shared by every frame of the window.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionNet {
    pub blocks: Vec<ColorBlock>,
}

impl ConditionNet {
    pub fn new(cfg: &ModelConfig) -> Self {
        let blocks = (0..COLOR_BLOCKS)
            .map(|i| {
                let cin = if i == 0 { 3 } else { cfg.c_cond };
                ColorBlock { conv: Conv::new(format!("stfm.cond.block{i}"), ConvSpec::new(cin, cfg.c_cond, 1)) }
            })
            .collect();
        ConditionNet { blocks }
    }

    pub fn reduction(&self) -> usize {
        1 << self.blocks.len()
    }

    pub fn forward_frame(&self, p: &ParamStore, frame: &Tensor) -> Result<Tensor, ModelError> {
        let [_, _, h, w] = frame.shape();
        let r = self.reduction();
        if h % r != 0 || w % r != 0 {
            return Err(ModelError::Extents {
                height: h,
                width: w,
                detail: format!(
                    "the condition network pools {} times, so extents must be divisible by {r}",
                    self.blocks.len()
                ),
            });
        }
        self.blocks.iter().try_fold(frame.clone(), |x, b| b.forward(p, &x))
    }

    pub fn forward(&self, p: &ParamStore, frames: &[Tensor]) -> Result<Vec<Tensor>, ModelError> {
        frames.iter().map(|f| self.forward_frame(p, f)).collect()
    }
}

/// `Up(Conv1×1(AvgPool3×3(LeakyReLU(F_i))))`, bilinear back to feature size.
#[derive(Debug, Clone, PartialEq)]
pub struct Sme {
    pub conv: Conv,
}

impl Sme {
    pub fn forward(
        &self,
        p: &ParamStore,
        f_i: &Tensor,
        extents: (usize, usize),
    ) -> Result<ModulationVector, ModelError> {
        let [_, _, h, w] = f_i.shape();
        let factor = extents.0 / h;
        if factor * h != extents.0 || factor * w != extents.1 {
            return Err(ModelError::Extents {
                height: extents.0,
                width: extents.1,
                detail: format!("not an integer multiple of the condition map {h}x{w}"),
            });
        }
        let y = self.conv.forward(p, &pool_avg(&leaky(f_i), 3, 1, 1)?)?;
        ModulationVector::from_packed(&upsample(&y, factor, UpsampleMode::Bilinear)?, ModulationKind::Spatial)
    }
}

/// `Conv1×1(GlobalPool(Conv1×1(F)))`; TME sees every frame's features
/// stacked on channels, CME only the center frame's.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorHead {
    pub a: Conv,
    pub b: Conv,
    pub kind: ModulationKind,
}

impl VectorHead {
    pub fn forward(&self, p: &ParamStore, feats: &[Tensor]) -> Result<ModulationVector, ModelError> {
        let f = if feats.len() == 1 { feats[0].clone() } else { concat_channels(feats)? };
        let y = self.b.forward(p, &pool_global(&self.a.forward(p, &f)?)?)?;
        ModulationVector::from_packed(&y, self.kind)
    }
}

/// `Conv1×1 → TFM → 3×[ReLU → Conv1×1 → CFM → SFM]`; missing vectors skip
/// their modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationBranch {
    pub first: Conv,
    pub body: Vec<Conv>,
}

#[derive(Debug, Clone, Default)]
pub struct Vectors {
    pub temporal: Option<ModulationVector>,
    pub current: Option<ModulationVector>,
    pub spatial: Option<ModulationVector>,
}

impl ModulationBranch {
    pub fn forward(&self, p: &ParamStore, f: &Tensor, v: &Vectors) -> Result<Tensor, ModelError> {
        let mut h = self.first.forward(p, f)?;
        if let Some(tm) = &v.temporal {
            h = apply_modulation(&h, tm)?;
        }
        for conv in &self.body {
            h = conv.forward(p, &relu(&h))?;
            for m in [&v.current, &v.spatial].into_iter().flatten() {
                h = apply_modulation(&h, m)?;
            }
        }
        Ok(h)
    }
}

/// `2×(Conv3×3 → LeakyReLU) → n×LKRB → Conv3×3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBranch {
    pub stem: Vec<Conv>,
    pub blocks: Vec<Lkrb>,
    pub tail: Conv,
}

impl ResidualBranch {
    pub fn forward(&self, p: &ParamStore, f: &Tensor) -> Result<Tensor, ModelError> {
        let h = self.stem.iter().try_fold(f.clone(), |h, c| Ok::<_, ModelError>(leaky(&c.forward(p, &h)?)))?;
        self.tail.forward(p, &chain(&self.blocks, p, h)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stfm {
    pub cond: Option<ConditionNet>,
    pub sme: Option<Sme>,
    pub tme: Option<VectorHead>,
    pub cme: Option<VectorHead>,
    pub modulation: ModulationBranch,
    pub residual: ResidualBranch,
}

#[derive(Debug, Clone)]
pub struct StfmOutput {
    pub vectors: Vectors,
    pub f_mod: Tensor,
    pub f_skip: Tensor,
    pub f_modulated: Tensor,
}

impl Stfm {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (c, cc, g) = (cfg.c_feat, cfg.c_cond, cfg.toggles);
        let head = |name: &str, cin: usize, kind| VectorHead {
            a: Conv::new(format!("stfm.{name}.a"), ConvSpec::new(cin, cc, 1)),
            b: Conv::new(format!("stfm.{name}.b"), ConvSpec::new(cc, 2 * c, 1)),
            kind,
        };
        Stfm {
            cond: g.uses_condition_net().then(|| ConditionNet::new(cfg)),
            sme: g.sfm.then(|| Sme { conv: Conv::new("stfm.sme", ConvSpec::new(cc, 2 * c, 1)) }),
            tme: g.tfm.then(|| head("tme", cc * cfg.frames(), ModulationKind::Temporal)),
            cme: g.cfm.then(|| head("cme", cc, ModulationKind::Current)),
            modulation: ModulationBranch {
                first: Conv::new("stfm.mod.first", ConvSpec::new(c, c, 1)),
                body: (0..MOD_REPEATS)
                    .map(|i| Conv::new(format!("stfm.mod.body{i}"), ConvSpec::new(c, c, 1)))
                    .collect(),
            },
            residual: ResidualBranch {
                stem: (0..2).map(|i| Conv::new(format!("stfm.res.stem{i}"), ConvSpec::new(c, c, 3))).collect(),
                blocks: (0..cfg.n_lkrb_stfm)
                    .map(|i| Lkrb::new(&format!("stfm.res.lkrb{i}"), c, g.lkrb_parallel))
                    .collect(),
                tail: Conv::new("stfm.res.tail", ConvSpec::new(c, c, 3)),
            },
        }
    }

    pub fn params(&self, out: &mut Vec<ParamSpec>) {
        if let Some(cn) = &self.cond {
            cn.blocks.iter().for_each(|b| b.conv.params(out));
        }
        if let Some(s) = &self.sme {
            s.conv.params(out);
        }
        for h in [&self.tme, &self.cme].into_iter().flatten() {
            h.a.params(out);
            h.b.params(out);
        }
        self.modulation.first.params(out);
        self.modulation.body.iter().for_each(|c| c.params(out));
        self.residual.stem.iter().for_each(|c| c.params(out));
        self.residual.blocks.iter().for_each(|b| b.params(out));
        self.residual.tail.params(out);
    }

    /// Modulation vectors from the frame window; `center` indexes `frames`.
    pub fn vectors(
        &self,
        p: &ParamStore,
        frames: &[Tensor],
        center: usize,
        extents: (usize, usize),
    ) -> Result<Vectors, ModelError> {
        let Some(cond) = &self.cond else {
            return Ok(Vectors::default());
        };
        let feats = match &self.tme {
            Some(_) => cond.forward(p, frames)?,
            None => vec![cond.forward_frame(p, &frames[center])?],
        };
        let f_i = if self.tme.is_some() { &feats[center] } else { &feats[0] };
        Ok(Vectors {
            temporal: self.tme.as_ref().map(|h| h.forward(p, &feats)).transpose()?,
            current: self.cme.as_ref().map(|h| h.forward(p, std::slice::from_ref(f_i))).transpose()?,
            spatial: self.sme.as_ref().map(|s| s.forward(p, f_i, extents)).transpose()?,
        })
    }

    pub fn forward(
        &self,
        p: &ParamStore,
        aligned: &Tensor,
        frames: &[Tensor],
        center: usize,
    ) -> Result<StfmOutput, ModelError> {
        let [_, _, h, w] = aligned.shape();
        let vectors = self.vectors(p, frames, center, (h, w))?;
        let f_mod = self.modulation.forward(p, aligned, &vectors)?;
        let f_skip = self.residual.forward(p, aligned)?;
        let f_modulated = add(&f_mod, &f_skip)?;
        Ok(StfmOutput { vectors, f_mod, f_skip, f_modulated })
    }
}
