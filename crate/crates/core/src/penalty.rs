//! Reward-level betrayal penalties from a frozen detector.

use serde::{Deserialize, Serialize};

use crate::detect::{check_feature_config, extract_features, Detector, RunningStats};
use crate::env::{GameConfig, TurnRecord};
use crate::error::{Error, Result};
use crate::ppo::{train_with, LearnerHook, PpoConfig, Shaped, TrainOutcome, TurnObserver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyMode {
    #[default]
    RewardLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub beta: f64,
    /// Path of the detector checkpoint.
    pub detector: Option<String>,
    pub apply_mode: ApplyMode,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            detector: None,
            apply_mode: ApplyMode::RewardLevel,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("penalty beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// `raw - beta * p`.
pub fn shaped_reward(raw: f64, p_betray: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_betray) {
        return Err(Error::Numeric(format!("betrayal probability {p_betray} outside [0, 1]")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("penalty beta must be >= 0, got {beta}")));
    }
    Ok(raw - beta * p_betray)
}

/// Scores every learner turn with the detector and penalizes its reward.
pub struct PenaltyHook<'d> {
    detector: &'d Detector,
    beta: f64,
    game: GameConfig,
    stats: RunningStats,
    episode: Option<u64>,
}

impl<'d> PenaltyHook<'d> {
    pub fn new(detector: &'d Detector, beta: f64, game: &GameConfig) -> Result<Self> {
        check_feature_config(game)?;
        Ok(Self {
            detector,
            beta,
            game: game.clone(),
            stats: RunningStats::new(game.n_agents),
            episode: None,
        })
    }
}

impl LearnerHook for PenaltyHook<'_> {
    fn on_turn(&mut self, episode: u64, record: &TurnRecord, learner: usize) -> Result<Option<Shaped>> {
        if self.episode != Some(episode) {
            self.episode = Some(episode);
            self.stats = RunningStats::new(self.game.n_agents);
        }
        let shaped = if record.agent == learner {
            let features = extract_features(record, &self.stats, &self.game)?;
            let p = self.detector.predict_proba(&features)?;
            Some(Shaped {
                reward: shaped_reward(record.reward, p, self.beta)?,
                p_betray: p,
            })
        } else {
            None
        };
        self.stats.update(record);
        Ok(shaped)
    }
}

/// PPO training with detector-shaped learner rewards. Metric rows gain the
/// detector probability and ground-truth betrayal flag.
pub fn penalized_train(
    ppo: &PpoConfig,
    game: &GameConfig,
    penalty: &PenaltyConfig,
    detector: &Detector,
) -> Result<TrainOutcome> {
    penalized_train_with(ppo, game, penalty, detector, &mut |_, _| Ok(()))
}

pub fn penalized_train_with<'a>(
    ppo: &PpoConfig,
    game: &GameConfig,
    penalty: &PenaltyConfig,
    detector: &'a Detector,
    observer: &'a mut TurnObserver<'a>,
) -> Result<TrainOutcome> {
    penalty.validate()?;
    let mut hook = PenaltyHook::new(detector, penalty.beta, game)?;
    train_with(ppo, game, &mut hook, observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(shaped_reward(0.7, 0.0, 3.0).unwrap(), 0.7);
        assert!((shaped_reward(0.7, 1.0, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(shaped_reward(0.0, 0.4, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_probability() {
        assert!(shaped_reward(0.5, 1.2, 0.5).is_err());
        assert!(shaped_reward(0.5, -0.1, 0.5).is_err());
        assert!(shaped_reward(0.5, f64::NAN, 0.5).is_err());
    }
}
