use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::Rng as GameRng;

use super::labels::{betrayal_label, honesty_label, is_degenerate};
use super::{
    apply_hunger_noise, opponent_slot, opponents, Action, AgentState, FoodItem, FoodStatus,
    GameConfig, Message, Observation, OpponentSnapshot, ReceivedMessage, SentMessage,
    TurnRecord, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Waiting for `begin_round`.
    RoundBoundary,
    InRound,
    Terminated,
}

/// Full mutable state of one episode. All randomness comes from the owned
/// generator, so a `(config, seed)` pair plus an action sequence fixes the
/// whole trajectory.
#[derive(Debug, Clone)]
pub struct GameState {
    pub config: GameConfig,
    pub worlds: Vec<WorldState>,
    pub agents: Vec<AgentState>,
    pub pool: Vec<FoodItem>,
    pub round_index: u32,
    pub turn_order: Vec<usize>,
    pub turn_cursor: usize,
    /// `inboxes[receiver][slot]` is the latest message from the opponent at
    /// `slot` in the receiver's ascending opponent list.
    pub inboxes: Vec<Vec<Message>>,
    pub phase: Phase,
    pub turns_taken: u64,
    initial_pool_reward: f64,
    rng: GameRng,
}

impl PartialEq for GameState {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.worlds == other.worlds
            && self.agents == other.agents
            && self.pool == other.pool
            && self.round_index == other.round_index
            && self.turn_order == other.turn_order
            && self.turn_cursor == other.turn_cursor
            && self.inboxes == other.inboxes
            && self.phase == other.phase
            && self.turns_taken == other.turns_taken
            && self.rng == other.rng
    }
}

impl GameState {
    /// Samples the food pool. No item is placed until `begin_round`.
    pub fn new(config: &GameConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = <GameRng as rand::SeedableRng>::seed_from_u64(seed);
        let n = config.n_agents;
        let len = config.grid_size;

        let mut rewards: Vec<f64> = Vec::with_capacity(config.n_food);
        while rewards.len() < config.n_food {
            let r = rng.random_range(config.reward_low..config.reward_high);
            if r > config.reward_low && r > 0.0 && !rewards.contains(&r) {
                rewards.push(r);
            }
        }
        let pool = rewards
            .into_iter()
            .enumerate()
            .map(|(id, reward)| {
                let nutrition = if config.nutrition_equals_reward {
                    reward
                } else {
                    loop {
                        let v = rng.random_range(config.reward_low..config.reward_high);
                        if v > 0.0 {
                            break v;
                        }
                    }
                };
                FoodItem {
                    id,
                    reward,
                    nutrition,
                    status: FoodStatus::Pooled,
                }
            })
            .collect::<Vec<_>>();
        let initial_pool_reward = pool.iter().map(|f| f.reward).sum();

        let inboxes = (0..n)
            .map(|i| {
                opponents(n, i)
                    .map(|j| Message::placeholder(j, i, len))
                    .collect()
            })
            .collect();

        Ok(Self {
            config: config.clone(),
            worlds: vec![WorldState::new(len); n],
            agents: vec![AgentState::default(); n],
            pool,
            round_index: 0,
            turn_order: (0..n).collect(),
            turn_cursor: 0,
            inboxes,
            phase: Phase::RoundBoundary,
            turns_taken: 0,
            initial_pool_reward,
            rng,
        })
    }

    /// Re-places every unconsumed item (uniform world among those with a free
    /// cell, then uniform free cell) and draws a new turn order.
    pub fn begin_round(&mut self) -> Result<()> {
        match self.phase {
            Phase::Terminated => {
                return Err(Error::Lifecycle("begin_round on a terminated game".into()))
            }
            Phase::InRound => {
                return Err(Error::Lifecycle(
                    "begin_round called before the current round finished".into(),
                ))
            }
            Phase::RoundBoundary => {}
        }
        let len = self.config.grid_size;
        for world in &mut self.worlds {
            *world = WorldState::new(len);
        }
        for item in self.pool.iter_mut().filter(|f| !f.is_consumed()) {
            let open: Vec<usize> = (0..self.worlds.len())
                .filter(|&w| self.worlds[w].free_cells().next().is_some())
                .collect();
            let &world = open
                .choose(&mut self.rng)
                .ok_or_else(|| Error::Invariant("no free cell for a pooled item".into()))?;
            let free: Vec<usize> = self.worlds[world].free_cells().collect();
            let &cell = free.choose(&mut self.rng).expect("world has a free cell");
            self.worlds[world].cells[cell] = Some(item.id);
            item.status = FoodStatus::Placed { world, cell };
        }
        self.turn_order.shuffle(&mut self.rng);
        self.round_index += 1;
        self.turn_cursor = 0;
        self.phase = Phase::InRound;
        Ok(())
    }

    pub fn current_actor(&self) -> Option<usize> {
        match self.phase {
            Phase::InRound => Some(self.turn_order[self.turn_cursor]),
            _ => None,
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.phase == Phase::Terminated
    }

    /// Termination test applied at round boundaries.
    pub fn is_terminal(&self) -> bool {
        self.unconsumed_count() == 0 || self.round_index >= self.config.max_rounds
    }

    pub fn unconsumed_count(&self) -> usize {
        self.pool.iter().filter(|f| !f.is_consumed()).count()
    }

    pub fn initial_pool_reward(&self) -> f64 {
        self.initial_pool_reward
    }

    pub fn consumed_reward(&self) -> f64 {
        self.pool.iter().filter(|f| f.is_consumed()).map(|f| f.reward).sum()
    }

    pub fn unconsumed_reward(&self) -> f64 {
        self.pool.iter().filter(|f| !f.is_consumed()).map(|f| f.reward).sum()
    }

    /// Per-cell reward of the items placed in `world` (0 for empty cells).
    pub fn cell_rewards(&self, world: usize) -> Vec<f64> {
        self.worlds[world]
            .cells
            .iter()
            .map(|c| c.map_or(0.0, |id| self.pool[id].reward))
            .collect()
    }

    pub fn observe(&self, agent: usize) -> Observation {
        let len = self.config.grid_size;
        let mut values = Vec::with_capacity(self.config.observation_len());
        for (slot, j) in opponents(self.config.n_agents, agent).enumerate() {
            values.extend(self.cell_rewards(j));
            values.extend_from_slice(&self.inboxes[agent][slot].transmitted);
        }
        values.push(self.agents[agent].hunger);
        values.push(self.round_index as f64 / self.config.max_rounds as f64);
        Observation {
            values,
            grid_size: len,
        }
    }

    pub fn step_turn(&mut self, agent: usize, action: &Action) -> Result<TurnRecord> {
        let actor = self.current_actor().ok_or_else(|| {
            Error::Lifecycle(format!("no turn in progress (phase {:?})", self.phase))
        })?;
        if actor != agent {
            return Err(Error::Lifecycle(format!(
                "agent {agent} acted out of turn; agent {actor} is to move"
            )));
        }
        let n = self.config.n_agents;
        let len = self.config.grid_size;
        if action.probe_cell >= len {
            return Err(Error::Action(format!(
                "probe_cell {} outside [0, {len})",
                action.probe_cell
            )));
        }
        if action.messages.len() != n - 1 {
            return Err(Error::Action(format!(
                "expected {} messages, got {}",
                n - 1,
                action.messages.len()
            )));
        }
        for m in &action.messages {
            if m.len() != len {
                return Err(Error::Dimension {
                    expected: len,
                    actual: m.len(),
                    context: "outgoing message",
                });
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Action("message has non-finite components".into()));
            }
        }

        let hunger_before = self.agents[agent].hunger;
        let turn_position = self.turn_cursor;
        let opponent_snapshots: Vec<OpponentSnapshot> = opponents(n, agent)
            .map(|j| {
                let cell_rewards = self.cell_rewards(j);
                OpponentSnapshot {
                    opponent: j,
                    world: self.worlds[j].clone(),
                    food_count: self.worlds[j].food_count(),
                    total_reward: cell_rewards.iter().sum(),
                    cell_rewards,
                }
            })
            .collect();
        let inbox_snapshot = self.inboxes[agent].clone();

        // Messages go out before the probe, noised with the pre-turn hunger.
        let mut sent = Vec::with_capacity(n - 1);
        for (snap, raw) in opponent_snapshots.iter().zip(&action.messages) {
            let intended: Vec<f64> = raw.iter().map(|x| x.clamp(0.0, 1.0)).collect();
            let transmitted = apply_hunger_noise(&intended, hunger_before, &mut self.rng)?;
            let betrayal = betrayal_label(&intended, &snap.world)?;
            let distortion = intended
                .iter()
                .zip(&transmitted)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let receiver = snap.opponent;
            self.inboxes[receiver][opponent_slot(receiver, agent)] = Message {
                sender: agent,
                receiver,
                intended: intended.clone(),
                transmitted: transmitted.clone(),
                round: self.round_index,
                described: Some(snap.world.clone()),
            };
            sent.push(SentMessage {
                receiver,
                degenerate: is_degenerate(&intended),
                intended,
                transmitted,
                betrayal,
                distortion,
            });
        }

        let cfg = &self.config;
        let state = &mut self.agents[agent];
        state.steps_taken += 1;
        let (reward, consumed) = match self.worlds[agent].cells[action.probe_cell].take() {
            Some(id) => {
                let item = &mut self.pool[id];
                item.status = FoodStatus::Consumed;
                state.hunger = (state.hunger - item.nutrition).max(0.0);
                state.cumulative_reward += item.reward;
                state.last_consume_step = Some(state.steps_taken);
                (item.reward, true)
            }
            None => {
                let raised = (state.hunger + cfg.hunger_delta).min(cfg.hunger_max);
                state.cumulative_hunger_gained += raised - state.hunger;
                state.hunger = raised;
                (0.0, false)
            }
        };
        let hunger_after = state.hunger;

        let received = inbox_snapshot
            .into_iter()
            .map(|m| {
                let (honest, honest_intended) = match &m.described {
                    Some(w) => (
                        honesty_label(&m.transmitted, w)?,
                        honesty_label(&m.intended, w)?,
                    ),
                    None => (false, false),
                };
                Ok(ReceivedMessage {
                    sender: m.sender,
                    degenerate: is_degenerate(&m.transmitted),
                    transmitted: m.transmitted,
                    intended: m.intended,
                    described: m.described,
                    honest,
                    honest_intended,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let record = TurnRecord {
            step: self.turns_taken,
            round: self.round_index,
            turn_position,
            agent,
            probe_cell: action.probe_cell,
            reward,
            consumed,
            hunger_before,
            hunger_after,
            sent,
            received,
            opponents: opponent_snapshots,
            pool_remaining: self.unconsumed_count(),
        };

        self.turns_taken += 1;
        self.turn_cursor += 1;
        if self.turn_cursor == n {
            self.phase = Phase::RoundBoundary;
            if self.is_terminal() {
                self.phase = Phase::Terminated;
            } else {
                self.begin_round()?;
            }
        }
        Ok(record)
    }
}
