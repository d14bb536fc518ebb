//! The TOML config file. Every command flag has a key here; flags win over
//! the file, the file over built-in defaults. A resolved copy (every key
//! filled in) is written next to each command's output before work starts.
//!
//! ```toml
//! run_root = "runs"            # base for relative output paths
//!
//! [synthetic]
//! scenes = 4
//! frames = 10
//! size = "32x32"
//! seed = 0
//! out = "synth"
//!
//! [train]
//! preset = "tiny"
//! data = "synth"
//! out = "tiny-run"
//! holdout = 1                  # trailing scenes kept for the final report
//! iters = 2000                 # rescales the schedule to this many iterations
//! seed = 0
//! resume = false
//! [train.model]                # optional overrides of the preset
//! c_feat = 8
//! [train.optim]                # any TrainConfig field
//! batch = 4
//! patch = 32
//!
//! [infer]
//! checkpoint = "tiny-run/checkpoint.ckpt"
//! scene = "synth/scene_0000"
//! frame_index = 0
//! out = "pred/0000.png"
//!
//! [eval]
//! pred = "pred"
//! ref = "synth/scene_0000"
//! out = "report.txt"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use hdrtv_model::ModelConfig;
use hdrtv_train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub run_root: Option<PathBuf>,
    pub synthetic: SyntheticSection,
    pub train: TrainSection,
    pub infer: InferSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub scenes: Option<usize>,
    pub frames: Option<usize>,
    /// `HxW`, e.g. `"32x32"`.
    pub size: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub preset: Option<String>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub holdout: Option<usize>,
    pub iters: Option<u64>,
    pub seed: Option<u64>,
    pub resume: Option<bool>,
    pub model: ModelOverrides,
    pub optim: TrainConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelOverrides {
    pub t: Option<usize>,
    pub c_feat: Option<usize>,
    pub c_offset: Option<usize>,
    pub c_cond: Option<usize>,
    pub n_lkrb_stfm: Option<usize>,
    pub n_lkrb_lkqe: Option<usize>,
    pub deform_groups: Option<usize>,
    pub dyn_k: Option<usize>,
}

impl ModelOverrides {
    pub fn apply(&self, mut cfg: ModelConfig) -> ModelConfig {
        let pairs = [
            (self.t, &mut cfg.t),
            (self.c_feat, &mut cfg.c_feat),
            (self.c_offset, &mut cfg.c_offset),
            (self.c_cond, &mut cfg.c_cond),
            (self.n_lkrb_stfm, &mut cfg.n_lkrb_stfm),
            (self.n_lkrb_lkqe, &mut cfg.n_lkrb_lkqe),
            (self.deform_groups, &mut cfg.deform_groups),
            (self.dyn_k, &mut cfg.dyn_k),
        ];
        for (v, slot) in pairs {
            if let Some(v) = v {
                *slot = v;
            }
        }
        cfg
    }

    /// Every field set to the value in `cfg`.
    pub fn resolved(cfg: &ModelConfig) -> Self {
        ModelOverrides {
            t: Some(cfg.t),
            c_feat: Some(cfg.c_feat),
            c_offset: Some(cfg.c_offset),
            c_cond: Some(cfg.c_cond),
            n_lkrb_stfm: Some(cfg.n_lkrb_stfm),
            n_lkrb_lkqe: Some(cfg.n_lkrb_lkqe),
            deform_groups: Some(cfg.deform_groups),
            dyn_k: Some(cfg.dyn_k),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    pub checkpoint: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub frame_index: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub pred: Option<PathBuf>,
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `path` under the run root when it is relative and a root is set.
    pub fn output_path(&self, path: &Path) -> PathBuf {
        match &self.run_root {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Writes the resolved config as `<dir>/<command>.effective.toml`.
    pub fn write_snapshot(&self, dir: &Path, command: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("{command}.effective.toml"));
        fs::write(&path, self.to_toml()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Parses `HxW`.
pub fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("size {s:?} is not HxW with positive integers"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (h, w): (usize, usize) = (h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?);
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}
