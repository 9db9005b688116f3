use crate::env::{argmax, betrayal_label, GameConfig, TurnRecord};
use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 33;
pub const FEATURE_SCHEMA_VERSION: &str = "features-v1";

/// Column names, in order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "round_frac",
    "turn_position",
    "own_hunger",
    "opp_hunger",
    "own_cum_reward",
    "opp_cum_reward",
    "step_reward",
    "consumed",
    "own_cum_hunger",
    "opp_cum_hunger",
    "sent_0",
    "sent_1",
    "sent_2",
    "sent_3",
    "sent_4",
    "sent_max",
    "sent_l1",
    "sent_entropy",
    "sent_argmax",
    "recv_0",
    "recv_1",
    "recv_2",
    "recv_3",
    "recv_4",
    "recv_max",
    "recv_l1",
    "recv_argmax",
    "pool_frac",
    "opp_food_frac",
    "opp_world_reward",
    "probe_success_rate",
    "steps_since_meal",
    "reward_per_step",
];

pub type FeatureRow = [f64; FEATURE_COUNT];

/// Episode-so-far statistics per agent, fed with every turn in play order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    hunger: Vec<f64>,
    cum_reward: Vec<f64>,
    cum_hunger: Vec<f64>,
    steps: Vec<u32>,
    meals: Vec<u32>,
    last_meal: Vec<Option<u32>>,
}

impl RunningStats {
    pub fn new(n_agents: usize) -> Self {
        Self {
            hunger: vec![0.0; n_agents],
            cum_reward: vec![0.0; n_agents],
            cum_hunger: vec![0.0; n_agents],
            steps: vec![0; n_agents],
            meals: vec![0; n_agents],
            last_meal: vec![None; n_agents],
        }
    }

    pub fn update(&mut self, record: &TurnRecord) {
        let a = record.agent;
        self.hunger[a] = record.hunger_after;
        self.cum_reward[a] += record.reward;
        self.cum_hunger[a] += (record.hunger_after - record.hunger_before).max(0.0);
        self.steps[a] += 1;
        if record.consumed {
            self.meals[a] += 1;
            self.last_meal[a] = Some(self.steps[a]);
        }
    }
}

/// Checks that the game matches the fixed 33-column layout (two agents, five cells).
pub fn check_feature_config(game: &GameConfig) -> Result<()> {
    if game.n_agents != 2 || game.grid_size != 5 {
        return Err(Error::Unsupported(format!(
            "the betrayal feature schema needs n_agents = 2 and grid_size = 5 (got {} and {})",
            game.n_agents, game.grid_size
        )));
    }
    Ok(())
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Shannon entropy (nats) of the L1-normalized vector; 0 for a zero vector.
fn normalized_entropy(v: &[f64]) -> f64 {
    let total = l1(v);
    if total == 0.0 {
        return 0.0;
    }
    v.iter()
        .map(|x| x.abs() / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Features of one turn. `stats` must cover every earlier turn of the
/// episode and not yet include this one; "to date" values include it.
pub fn extract_features(record: &TurnRecord, stats: &RunningStats, game: &GameConfig) -> Result<FeatureRow> {
    check_feature_config(game)?;
    let (sent, received, opp) = match (
        record.sent.as_slice(),
        record.received.as_slice(),
        record.opponents.as_slice(),
    ) {
        ([s], [r], [o]) => (s, r, o),
        _ => {
            return Err(Error::Schema(
                "turn record must hold exactly one sent and one received message".into(),
            ))
        }
    };
    let a = record.agent;
    let o = opp.opponent;
    let len = game.grid_size as f64;
    let k = game.n_food as f64;
    let max_rounds = game.max_rounds as f64;

    let own_steps = stats.steps[a] + 1;
    let own_meals = stats.meals[a] + record.consumed as u32;
    let own_reward = stats.cum_reward[a] + record.reward;
    let own_hunger = stats.cum_hunger[a] + (record.hunger_after - record.hunger_before).max(0.0);
    let last_meal = if record.consumed {
        Some(own_steps)
    } else {
        stats.last_meal[a]
    };
    let since_meal = own_steps - last_meal.unwrap_or(0);

    let msg = &sent.intended;
    let inc = &received.transmitted;
    let mut row = [0.0; FEATURE_COUNT];
    row[0] = record.round as f64 / max_rounds;
    row[1] = record.turn_position as f64 / (game.n_agents - 1) as f64;
    row[2] = record.hunger_before;
    row[3] = stats.hunger[o];
    row[4] = own_reward;
    row[5] = stats.cum_reward[o];
    row[6] = record.reward;
    row[7] = record.consumed as u8 as f64;
    row[8] = own_hunger;
    row[9] = stats.cum_hunger[o];
    row[10..15].copy_from_slice(msg);
    row[15] = max(msg);
    row[16] = l1(msg);
    row[17] = normalized_entropy(msg);
    row[18] = argmax(msg) as f64 / (len - 1.0);
    row[19..24].copy_from_slice(inc);
    row[24] = max(inc);
    row[25] = l1(inc);
    row[26] = argmax(inc) as f64 / (len - 1.0);
    row[27] = record.pool_remaining as f64 / k;
    row[28] = opp.food_count as f64 / k;
    row[29] = opp.total_reward;
    row[30] = own_meals as f64 / own_steps as f64;
    row[31] = since_meal as f64 / max_rounds;
    row[32] = own_reward / own_steps as f64;
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature".into()));
    }
    Ok(row)
}

/// Betrayal label recomputed from the stored message and world snapshot.
pub fn replay_label(record: &TurnRecord) -> Result<u8> {
    let mut any = false;
    for (sent, opp) in record.sent.iter().zip(&record.opponents) {
        any |= betrayal_label(&sent.intended, &opp.world)?;
    }
    Ok(any as u8)
}
