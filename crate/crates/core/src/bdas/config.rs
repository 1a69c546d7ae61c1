use serde::{Deserialize, Serialize};

use crate::bdas::dataset::Sampling;
use crate::error::{Error, Result};

/// Optimisation and data settings for one alignment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_rotation: f64,
    pub lr_boundary: f64,
    pub batch: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub train_size: usize,
    pub eval_size: usize,
    pub test_size: usize,
    /// Weight of the total-width term `λ · Σ widths / d` added to the loss.
    pub width_penalty: f64,
    pub sampling: Sampling,
    /// Seed of the held-out test set, shared by every run of a sweep.
    pub test_seed: u64,
    /// Stops early after this many optimizer steps; the β schedule is
    /// laid over the shortened run.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_rotation: 1e-3,
            lr_boundary: 1e-2,
            batch: 64,
            epochs: 3,
            eval_every: 200,
            beta_start: 50.0,
            beta_end: 0.1,
            train_size: 20_000,
            eval_size: 200,
            test_size: 1000,
            width_penalty: 1.0,
            sampling: Sampling::Balanced,
            test_seed: 1_000_003,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_rotation", self.lr_rotation),
            ("lr_boundary", self.lr_boundary),
            ("beta_start", self.beta_start),
            ("beta_end", self.beta_end),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("batch", self.batch),
            ("epochs", self.epochs),
            ("eval_every", self.eval_every),
            ("train_size", self.train_size),
            ("eval_size", self.eval_size),
            ("test_size", self.test_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.beta_end >= self.beta_start {
            return Err(Error::Config(format!(
                "beta_end ({}) must be below beta_start ({})",
                self.beta_end, self.beta_start
            )));
        }
        if !(self.width_penalty.is_finite() && self.width_penalty >= 0.0) {
            return Err(Error::Config(format!("width_penalty must be non-negative, got {}", self.width_penalty)));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        let full = self.epochs * self.train_size.div_ceil(self.batch);
        self.max_steps.map_or(full, |m| m.min(full))
    }

    /// Temperature at `step` of `total`: log-linear from `beta_start` to
    /// `beta_end`, hitting both ends exactly.
    pub fn beta_at(&self, step: usize, total: usize) -> f64 {
        if total <= 1 || step == 0 {
            return self.beta_start;
        }
        if step >= total - 1 {
            return self.beta_end;
        }
        let t = step as f64 / (total - 1) as f64;
        (self.beta_start.ln() + t * (self.beta_end.ln() - self.beta_start.ln())).exp()
    }
}
