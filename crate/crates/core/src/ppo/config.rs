use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub total_timesteps: u64,
    pub rollout_length: usize,
    pub minibatch_size: usize,
    pub update_epochs: usize,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_timesteps: 100_000,
            rollout_length: 2048,
            minibatch_size: 256,
            update_epochs: 10,
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail(format!("clip_epsilon must be in (0, 1), got {}", self.clip_epsilon));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail(format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        if self.rollout_length == 0 || self.minibatch_size == 0 {
            return fail("rollout_length and minibatch_size must be positive".into());
        }
        if !self.rollout_length.is_multiple_of(self.minibatch_size) {
            return fail(format!(
                "rollout_length {} is not divisible by minibatch_size {}",
                self.rollout_length, self.minibatch_size
            ));
        }
        if self.update_epochs == 0 {
            return fail("update_epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return fail("learning_rate and max_grad_norm must be positive".into());
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return fail("loss coefficients must be non-negative".into());
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer widths must be positive".into());
        }
        Ok(())
    }
}
