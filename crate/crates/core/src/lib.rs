//! Two-agent food-signalling game, a from-scratch PPO learner, and the
//! betrayal detector used to shape rewards during training.

pub mod agents;
pub mod detect;
pub mod env;
pub mod error;
pub mod nn;
pub mod penalty;
pub mod ppo;
pub mod run;
pub mod scalar;
pub mod seed;
pub mod telemetry;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by the trainer, the detector and every file format.
pub type Real = f64;
pub type Network = nn::NetworkParams<Real>;
pub type Policy = agents::PolicyNet<Real>;
pub type NetCheckpoint = nn::Checkpoint<Real>;
