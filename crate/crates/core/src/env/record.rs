use serde::{Deserialize, Serialize};

use super::WorldState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentMessage {
    pub receiver: usize,
    /// After clamping to `[0, 1]`, before noise.
    pub intended: Vec<f64>,
    pub transmitted: Vec<f64>,
    pub betrayal: bool,
    /// All components equal; the label then rests on the tie-break.
    pub degenerate: bool,
    /// `max |transmitted - intended|`.
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceivedMessage {
    pub sender: usize,
    pub transmitted: Vec<f64>,
    pub intended: Vec<f64>,
    pub described: Option<WorldState>,
    /// Judged on the transmitted vector.
    pub honest: bool,
    /// Judged on the sender's intended vector.
    pub honest_intended: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpponentSnapshot {
    pub opponent: usize,
    pub world: WorldState,
    pub cell_rewards: Vec<f64>,
    pub food_count: usize,
    pub total_reward: f64,
}

/// Everything that happened in one turn, as seen from the acting agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    /// Turn index within the episode, counting every agent's turns.
    pub step: u64,
    pub round: u32,
    /// Position of this turn inside its round, from 0.
    pub turn_position: usize,
    pub agent: usize,
    pub probe_cell: usize,
    pub reward: f64,
    pub consumed: bool,
    pub hunger_before: f64,
    pub hunger_after: f64,
    pub sent: Vec<SentMessage>,
    pub received: Vec<ReceivedMessage>,
    pub opponents: Vec<OpponentSnapshot>,
    pub pool_remaining: usize,
}

impl TurnRecord {
    pub fn any_betrayal(&self) -> bool {
        self.sent.iter().any(|m| m.betrayal)
    }

    pub fn distortion(&self) -> f64 {
        self.sent.iter().map(|m| m.distortion).fold(0.0, f64::max)
    }

    /// Fraction of received messages judged honest after noise.
    pub fn honesty(&self) -> f64 {
        fraction(self.received.iter().map(|m| m.honest))
    }

    pub fn honesty_intended(&self) -> f64 {
        fraction(self.received.iter().map(|m| m.honest_intended))
    }
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut yes, mut n) = (0usize, 0usize);
    for f in flags {
        n += 1;
        yes += f as usize;
    }
    if n == 0 {
        0.0
    } else {
        yes as f64 / n as f64
    }
}
