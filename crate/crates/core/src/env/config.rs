use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Each transmitted component gets independent noise drawn from `[-h, h]`,
    /// `h` being the sender's hunger.
    #[default]
    UniformAdditive,
}

/// Rule parameters of one game. Defaults are the two-agent, five-cell setup
/// with a 0.15 hunger increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameConfig {
    pub n_agents: usize,
    pub grid_size: usize,
    pub n_food: usize,
    pub hunger_delta: f64,
    pub hunger_max: f64,
    pub reward_low: f64,
    pub reward_high: f64,
    pub nutrition_equals_reward: bool,
    pub max_rounds: u32,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            n_agents: 2,
            grid_size: 5,
            n_food: 6,
            hunger_delta: 0.15,
            hunger_max: 1.0,
            reward_low: 0.0,
            reward_high: 1.0,
            nutrition_equals_reward: true,
            max_rounds: 50,
            noise_kind: NoiseKind::UniformAdditive,
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_agents < 2 {
            return fail(format!("n_agents must be >= 2 (got {})", self.n_agents));
        }
        if self.n_food < self.n_agents {
            return fail(format!(
                "n_food < n_agents: n_food must be >= n_agents ({} < {})",
                self.n_food, self.n_agents
            ));
        }
        if self.grid_size < 2 {
            return fail(format!("grid_size must be >= 2 (got {})", self.grid_size));
        }
        if self.n_food > self.n_agents * self.grid_size {
            return fail(format!(
                "n_food must fit in the worlds: {} > n_agents * grid_size = {}",
                self.n_food,
                self.n_agents * self.grid_size
            ));
        }
        if !(self.hunger_delta > 0.0 && self.hunger_delta <= self.hunger_max) {
            return fail(format!(
                "need 0 < hunger_delta <= hunger_max (got {} and {})",
                self.hunger_delta, self.hunger_max
            ));
        }
        if !self.hunger_max.is_finite() {
            return fail("hunger_max must be finite".into());
        }
        if !(0.0 <= self.reward_low && self.reward_low < self.reward_high && self.reward_high <= 1.0)
        {
            return fail(format!(
                "need 0 <= reward_low < reward_high <= 1 (got {} and {})",
                self.reward_low, self.reward_high
            ));
        }
        if self.max_rounds < 1 {
            return fail("max_rounds must be >= 1".into());
        }
        Ok(())
    }

    /// Width of the vector returned by `GameState::observe`.
    pub fn observation_len(&self) -> usize {
        (self.n_agents - 1) * 2 * self.grid_size + 2
    }

    /// Message dimension; equal to the number of cells.
    pub fn message_len(&self) -> usize {
        self.grid_size
    }
}
