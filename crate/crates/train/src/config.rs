use serde::{Deserialize, Serialize};

use crate::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Iteration constants are given at full length; `scale` shrinks all of them
/// (and the halving boundaries) for short runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub halve_every_a: u64,
    pub phase_boundary: u64,
    pub halve_every_b: u64,
    pub total_iters: u64,
    pub scale: f64,
    pub batch: usize,
    pub patch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Global gradient-norm ceiling; off when `None`.
    pub clip_grad: Option<f64>,
    /// Checkpoint period in iterations; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 5e-4,
            halve_every_a: 50_000,
            phase_boundary: 150_000,
            halve_every_b: 40_000,
            total_iters: 350_000,
            scale: 1.0,
            batch: 4,
            patch: 96,
            seed: 0,
            adam: AdamConfig::default(),
            clip_grad: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// `scale` that turns `total_iters` into `iters` after rounding.
    pub fn with_total(mut self, iters: u64) -> Self {
        self.scale = iters as f64 / self.total_iters as f64;
        self
    }

    fn scaled(&self, v: u64) -> u64 {
        (v as f64 * self.scale).round() as u64
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        for (name, v) in [
            ("halve_every_a", self.halve_every_a),
            ("phase_boundary", self.phase_boundary),
            ("halve_every_b", self.halve_every_b),
            ("total_iters", self.total_iters),
        ] {
            if self.scaled(v) == 0 {
                return bad(format!("{name} = {v} rounds to 0 at scale {}", self.scale));
            }
        }
        if self.batch == 0 || self.patch == 0 {
            return bad("batch and patch must be positive".into());
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return bad(format!("adam needs betas in [0, 1) and eps > 0, got {:?}", self.adam));
        }
        if let Some(c) = self.clip_grad {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("clip_grad must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, TrainError> {
        self.validate()?;
        let mut full = Vec::new();
        let mut b = self.halve_every_a;
        while b <= self.phase_boundary {
            full.push(b);
            b += self.halve_every_a;
        }
        let mut b = self.phase_boundary + self.halve_every_b;
        while b < self.total_iters {
            full.push(b);
            b += self.halve_every_b;
        }
        let total = self.scaled(self.total_iters);
        let boundaries = full.iter().map(|&b| self.scaled(b)).filter(|&b| b < total).collect();
        Ok(Schedule { lr0: self.lr0, total, boundaries })
    }
}

/// Piecewise-constant learning rate: `lr0` halved once per boundary passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub lr0: f64,
    pub total: u64,
    /// Iterations at which the rate halves, ascending; a repeated value
    /// (possible after heavy scaling) halves twice.
    pub boundaries: Vec<u64>,
}

impl Schedule {
    pub fn lr(&self, iter: u64) -> f64 {
        let halvings = self.boundaries.iter().filter(|&&b| b <= iter).count();
        self.lr0 * 0.5f64.powi(halvings as i32)
    }
}
