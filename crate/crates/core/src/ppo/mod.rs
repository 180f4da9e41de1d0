//! Proximal policy optimization over batched environments.

pub mod buffer;
pub mod gae;
pub mod log;
pub mod loss;
pub mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use buffer::{collect_rollout, RolloutBuffer};
pub use gae::{compute_gae, AdvantageSet, GaeInput};
pub use log::{CurveCheck, EpochLog, TrainLog, CURVE_WINDOW, CURVE_EPOCH_LIMIT, CURVE_LENGTH_TARGET};
pub use loss::{clipped_surrogate, ppo_loss, LossCoefficients, LossStats, SampleSet};
pub use trainer::{TrainOutcome, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Environment steps per env per epoch.
    pub horizon: usize,
    pub minibatches: usize,
    pub update_epochs: usize,
    pub num_envs: usize,
    /// Rollout-update cycles.
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr`.
    pub lr_floor_frac: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub checkpoint_every: usize,
    pub normalize_obs: bool,
    /// Environment worker threads; 1 forces single-worker collection.
    pub workers: usize,
}

impl TrainConfig {
    /// Laptop-scale preset used by the acceptance run.
    pub fn desk() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            value_coef: 1.0,
            entropy_coef: 0.003,
            horizon: 64,
            minibatches: 8,
            update_epochs: 4,
            num_envs: 256,
            epochs: 300,
            seed: 7,
            lr: 5e-4,
            lr_floor_frac: 0.1,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            checkpoint_every: 50,
            normalize_obs: false,
            workers: 1,
        }
    }

    /// Full-scale preset: wide network, many environments, long schedule.
    pub fn paper() -> Self {
        Self {
            num_envs: 16_384,
            epochs: 5_000,
            hidden: vec![512, 256, 128, 64],
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(Error::Config(
                "gamma and gae_lambda must lie in (0, 1]".into(),
            ));
        }
        if !(self.clip_eps > 0.0) {
            return Err(Error::Config("clip_eps must be positive".into()));
        }
        if self.horizon == 0
            || self.minibatches == 0
            || self.update_epochs == 0
            || self.num_envs == 0
            || self.epochs == 0
            || self.checkpoint_every == 0
            || self.workers == 0
        {
            return Err(Error::Config("all counts must be >= 1".into()));
        }
        if self.minibatches > self.horizon * self.num_envs {
            return Err(Error::Config("more minibatches than samples".into()));
        }
        if !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.lr_floor_frac) {
            return Err(Error::Config(
                "lr must be positive, lr_floor_frac in [0, 1]".into(),
            ));
        }
        if !(self.max_grad_norm > 0.0) || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(Error::Config("coefficients must be non-negative".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "hidden layers must be non-empty and non-zero".into(),
            ));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}
