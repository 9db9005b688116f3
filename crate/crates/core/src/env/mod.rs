//! The game: `N` one-dimensional worlds, one per agent, sharing a pool of
//! food items that is redistributed at the start of every round.
//!
//! Agents act one at a time in a freshly shuffled order. On its turn an agent
//! sees every world except its own, sends one message per opponent describing
//! that opponent's world, and probes one cell of its own world using what the
//! opponents told it. Failing to eat raises hunger, and hunger adds uniform
//! noise to everything the agent sends afterwards.

mod config;
pub mod labels;
mod noise;
mod record;
mod state;

use serde::{Deserialize, Serialize};

pub use config::{GameConfig, NoiseKind};
pub use labels::{argmax, betrayal_label, honesty_label, is_degenerate};
pub use noise::apply_hunger_noise;
pub use record::{OpponentSnapshot, ReceivedMessage, SentMessage, TurnRecord};
pub use state::{GameState, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FoodStatus {
    Pooled,
    Placed { world: usize, cell: usize },
    Consumed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodItem {
    pub id: usize,
    pub reward: f64,
    pub nutrition: f64,
    pub status: FoodStatus,
}

impl FoodItem {
    pub fn is_consumed(&self) -> bool {
        self.status == FoodStatus::Consumed
    }
}

/// Cell contents of one world: `Some(food id)` or empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorldState {
    pub cells: Vec<Option<usize>>,
}

impl WorldState {
    pub fn new(len: usize) -> Self {
        Self {
            cells: vec![None; len],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(Option::is_none)
    }

    pub fn is_occupied(&self, cell: usize) -> bool {
        self.cells[cell].is_some()
    }

    pub fn food_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AgentState {
    pub hunger: f64,
    pub cumulative_reward: f64,
    pub cumulative_hunger_gained: f64,
    pub steps_taken: u32,
    /// Value of `steps_taken` right after the agent's latest meal.
    pub last_consume_step: Option<u32>,
}

/// The latest message an agent holds from one opponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: usize,
    pub receiver: usize,
    pub intended: Vec<f64>,
    pub transmitted: Vec<f64>,
    pub round: u32,
    /// The receiver's world as the sender saw it when sending. `None` for the
    /// zero placeholder held before anything has been received.
    pub described: Option<WorldState>,
}

impl Message {
    pub fn placeholder(sender: usize, receiver: usize, len: usize) -> Self {
        Self {
            sender,
            receiver,
            intended: vec![0.0; len],
            transmitted: vec![0.0; len],
            round: 0,
            described: None,
        }
    }
}

/// One turn's decision. `messages` holds one vector per opponent in
/// ascending opponent order, skipping the acting agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub probe_cell: usize,
    pub messages: Vec<Vec<f64>>,
}

/// Flat observation vector with accessors for its fixed layout: per opponent
/// (ascending index) its cell rewards then its latest message, followed by
/// own hunger and `round_index / max_rounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub grid_size: usize,
}

impl Observation {
    pub fn n_opponents(&self) -> usize {
        (self.values.len() - 2) / (2 * self.grid_size)
    }

    pub fn opponent_world(&self, slot: usize) -> &[f64] {
        let start = slot * 2 * self.grid_size;
        &self.values[start..start + self.grid_size]
    }

    pub fn inbox(&self, slot: usize) -> &[f64] {
        let start = slot * 2 * self.grid_size + self.grid_size;
        &self.values[start..start + self.grid_size]
    }

    pub fn hunger(&self) -> f64 {
        self.values[self.values.len() - 2]
    }

    pub fn round_fraction(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Opponent indices of `agent` in ascending order.
pub fn opponents(n_agents: usize, agent: usize) -> impl Iterator<Item = usize> {
    (0..n_agents).filter(move |&j| j != agent)
}

/// Position of `other` in `agent`'s ascending opponent list.
pub fn opponent_slot(agent: usize, other: usize) -> usize {
    if other < agent {
        other
    } else {
        other - 1
    }
}
