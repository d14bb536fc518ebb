use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Component switches, one per ablation step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    /// Deformable fusion driven by the offset estimator; a plain 3×3 conv otherwise.
    pub align: bool,
    /// 7×7 dynamic convolution in the offset estimator; a static 7×7 depthwise otherwise.
    pub dynamic_offset: bool,
    pub tfm: bool,
    pub cfm: bool,
    pub sfm: bool,
    /// 17×17 depthwise stage inside the skip branch's residual blocks.
    pub lkrb_parallel: bool,
    pub lkqe: bool,
}

impl Toggles {
    pub const ALL: Toggles =
        Toggles { align: true, dynamic_offset: true, tfm: true, cfm: true, sfm: true, lkrb_parallel: true, lkqe: true };

    pub fn uses_condition_net(&self) -> bool {
        self.tfm || self.cfm || self.sfm
    }
}

pub const PRESETS: [&str; 11] = ["M0", "M1", "M2", "M3", "M4", "M5", "M6", "M7", "full", "tiny", "mresnet"];

/// Everything that determines the graph and the parameter count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: String,
    /// Reference radius; the window holds `2T+1` frames.
    pub t: usize,
    pub c_feat: usize,
    /// Width of the offset estimator.
    pub c_offset: usize,
    /// Width of the condition network.
    pub c_cond: usize,
    pub n_lkrb_stfm: usize,
    pub n_lkrb_lkqe: usize,
    pub deform_groups: usize,
    /// Candidate kernels of the dynamic convolution.
    pub dyn_k: usize,
    pub toggles: Toggles,
}

/// Kernel extents fixed by the architecture.
pub const LARGE_K: usize = 17;
pub const DYN_K: usize = 7;
pub const DEFORM_K: usize = 3;
pub const COLOR_BLOCKS: usize = 4;
pub const MOD_REPEATS: usize = 3;

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            preset: "full".into(),
            t: 1,
            c_feat: 64,
            c_offset: 96,
            c_cond: 64,
            n_lkrb_stfm: 4,
            n_lkrb_lkqe: 4,
            deform_groups: 1,
            dyn_k: 4,
            toggles: Toggles::ALL,
        }
    }
}

impl ModelConfig {
    /// `M0`…`M7` add one component each on top of the previous row;
    /// `M7` is `full`. `tiny` is `full` at width 8. `mresnet` is `M0` fed
    /// the whole stacked window.
    pub fn preset(name: &str) -> Result<Self, ModelError> {
        let full = ModelConfig::default();
        let mut toggles = Toggles::default();
        let mut t = 0;
        let steps: &[fn(&mut Toggles, &mut usize)] = &[
            |_, _| {},
            |g, _| g.cfm = true,
            |g, _| g.lkrb_parallel = true,
            |g, t| {
                g.tfm = true;
                *t = 1;
            },
            |g, _| g.sfm = true,
            |g, _| g.align = true,
            |g, _| g.lkqe = true,
            |g, _| g.dynamic_offset = true,
        ];
        let cfg = match name {
            "full" => full,
            "tiny" => ModelConfig { preset: "tiny".into(), ..full.with_width(8) },
            "mresnet" => ModelConfig { preset: name.into(), t: 1, toggles, ..full },
            m if m.len() == 2 && m.starts_with('M') && (b'0'..=b'7').contains(&m.as_bytes()[1]) => {
                let k = (m.as_bytes()[1] - b'0') as usize;
                for step in &steps[..=k] {
                    step(&mut toggles, &mut t);
                }
                ModelConfig { preset: name.into(), t, toggles, ..full }
            }
            _ => {
                return Err(ModelError::UnknownPreset { name: name.into(), valid: PRESETS.join(", ") });
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same graph with every width set to `c`.
    pub fn with_width(self, c: usize) -> Self {
        ModelConfig { c_feat: c, c_offset: c, c_cond: c, ..self }
    }

    pub fn frames(&self) -> usize {
        2 * self.t + 1
    }

    pub fn in_channels(&self) -> usize {
        3 * self.frames()
    }

    pub fn attention_hidden(&self) -> usize {
        (self.c_offset / 4).max(4)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.toggles.dynamic_offset && !self.toggles.align {
            return bad("dynamic_offset requires align: the dynamic convolution lives in the offset estimator".into());
        }
        if self.c_feat == 0 || self.c_offset == 0 || self.c_cond == 0 {
            return bad("channel widths must be positive".into());
        }
        if self.dyn_k == 0 {
            return bad("dyn_k must be at least 1".into());
        }
        if self.deform_groups == 0 || self.in_channels() % self.deform_groups != 0 {
            return bad(format!(
                "deform_groups {} must divide the {} stacked input channels",
                self.deform_groups,
                self.in_channels()
            ));
        }
        Ok(())
    }

    /// Spatial extents must be divisible by this.
    pub fn extent_multiple(&self) -> usize {
        if self.toggles.uses_condition_net() {
            1 << COLOR_BLOCKS
        } else if self.toggles.align {
            2
        } else {
            1
        }
    }

    /// Closed-form parameter count, layer by layer.
    pub fn param_count(&self) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
        let dw = |c: usize, k: usize| c * k * k + c;
        let (c, co, cc, g) = (self.c_feat, self.c_offset, self.c_cond, self.toggles);
        let cin = self.in_channels();

        let mut n = conv(cin, c, DEFORM_K);
        if g.align {
            n += conv(cin, co, 3) + 2 * dw(co, LARGE_K) + conv(co, co, 4);
            n += conv(co, 2 * DEFORM_K * DEFORM_K * self.deform_groups, 1);
            n += if g.dynamic_offset {
                self.dyn_k * co * DYN_K * DYN_K
                    + conv(co, self.attention_hidden(), 1)
                    + conv(self.attention_hidden(), self.dyn_k, 1)
            } else {
                dw(co, DYN_K)
            };
        }
        if g.uses_condition_net() {
            n += conv(3, cc, 1) + (COLOR_BLOCKS - 1) * conv(cc, cc, 1);
        }
        if g.tfm {
            n += conv(cc * self.frames(), cc, 1) + conv(cc, 2 * c, 1);
        }
        if g.cfm {
            n += conv(cc, cc, 1) + conv(cc, 2 * c, 1);
        }
        if g.sfm {
            n += conv(cc, 2 * c, 1);
        }
        n += (1 + MOD_REPEATS) * conv(c, c, 1);
        let block = |large: bool| conv(c, c, 3) + if large { dw(c, LARGE_K) } else { 0 };
        n += 3 * conv(c, c, 3) + self.n_lkrb_stfm * block(g.lkrb_parallel);
        if g.lkqe {
            n += conv(c, c, 3) + self.n_lkrb_lkqe * block(true);
        }
        n + conv(c, 3, 3)
    }
}
