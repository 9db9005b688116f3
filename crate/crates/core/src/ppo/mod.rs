//! Proximal policy optimization of the learner against truthful opponents.

mod config;
mod gae;
mod loss;
mod rollout;
mod trainer;

pub use config::PpoConfig;
pub use gae::{compute_gae, normalize_advantages, Advantages};
pub use loss::{ppo_loss, LossCoefficients, LossOutput, LossStats, Transition};
pub use rollout::{EnvStep, LearnerEnv};
pub use trainer::{
    initial_policy, run_scripted, train, train_with, LearnerHook, NoHook, Shaped, TrainOutcome,
    TurnObserver, UpdateStats, LEARNER,
};
