use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::DualVars;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub batch_size: usize,
    /// Priority exponent.
    pub alpha: f64,
    /// Importance exponent, annealed linearly from `beta_start` to `beta_end`.
    pub beta_start: f64,
    pub beta_end: f64,
    pub p_min: f64,
    /// Environment steps collected before the first update.
    pub warmup: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { capacity: 100_000, batch_size: 64, alpha: 0.6, beta_start: 0.4, beta_end: 1.0, p_min: 1e-6, warmup: 1_000 }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.capacity < self.batch_size {
            return Err(Error::InvalidParam {
                name: "replay",
                reason: format!("batch {} does not fit capacity {}", self.batch_size, self.capacity),
            });
        }
        if !(self.alpha >= 0.0 && self.p_min > 0.0 && (0.0..=1.0).contains(&self.beta_start) && (0.0..=1.0).contains(&self.beta_end)) {
            return Err(Error::InvalidParam { name: "replay", reason: "exponents or priority floor out of range".into() });
        }
        Ok(())
    }

    /// Importance exponent after `progress` of training, in `[0, 1]`.
    pub fn beta(&self, progress: f64) -> f64 {
        self.beta_start + (self.beta_end - self.beta_start) * progress.clamp(0.0, 1.0)
    }
}

/// What the multiplier step compares against `1 - xi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualEstimate {
    /// Batch mean of the learned safety heads at the `lambda`-greedy action.
    #[default]
    Value,
    /// Safety indicators observed on the behaviour trajectory, one step per
    /// environment step. Unbiased for the stationary violation rate, unlike the
    /// learned heads, which inherit the maximization bias of the greedy action.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualConfig {
    pub lambda_lr: f64,
    pub estimate: DualEstimate,
    /// Initial multipliers, one per constraint.
    pub lambda_init: Vec<f64>,
    /// Allowed violation probability, one per constraint.
    pub xi: Vec<f64>,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self { lambda_lr: 1e-4, estimate: DualEstimate::default(), lambda_init: vec![25.0, 25.0], xi: vec![0.025, 0.025] }
    }
}

impl DualConfig {
    pub fn build(&self) -> Result<DualVars> {
        if !(self.lambda_lr >= 0.0) {
            return Err(Error::InvalidParam { name: "lambda_lr", reason: format!("{}", self.lambda_lr) });
        }
        if self.xi.iter().any(|x| !(0.0..1.0).contains(x)) {
            return Err(Error::InvalidParam { name: "xi", reason: "must lie in [0, 1)".into() });
        }
        DualVars::new(&self.lambda_init, &self.xi, self.lambda_lr)
    }
}

/// `start (end/start)^(min(1, progress / horizon))`.
pub fn geometric_schedule(start: f64, end: f64, progress: f64, horizon: f64) -> f64 {
    let x = if horizon > 0.0 { (progress / horizon).clamp(0.0, 1.0) } else { 1.0 };
    start * (end / start).powf(x)
}
