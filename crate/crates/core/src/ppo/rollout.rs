use crate::agents::AgentPolicy;
use crate::env::{Action, GameConfig, GameState, Observation, TurnRecord};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// The game from one agent's point of view: opponents move automatically
/// with their scripted policies, and the learner is asked for an action only
/// on its own turns.
pub struct LearnerEnv {
    game: GameConfig,
    learner: usize,
    opponent: AgentPolicy,
    opponent_rng: seed::Rng,
    seed: u64,
    episode: u64,
    state: Option<GameState>,
}

/// Turns played by `step` (or `reset`), in order, plus whether the
/// learner's transition ended the episode.
#[derive(Debug, Clone)]
pub struct EnvStep {
    pub records: Vec<TurnRecord>,
    pub done: bool,
}

impl LearnerEnv {
    pub fn new(game: &GameConfig, learner: usize, opponent: AgentPolicy, seed: u64) -> Result<Self> {
        game.validate()?;
        if learner >= game.n_agents {
            return Err(Error::Config(format!(
                "learner index {learner} outside 0..{}",
                game.n_agents
            )));
        }
        Ok(Self {
            game: game.clone(),
            learner,
            opponent,
            opponent_rng: seed::rng(seed, Stream::Opponent, 0),
            seed,
            episode: 0,
            state: None,
        })
    }

    pub fn learner(&self) -> usize {
        self.learner
    }

    /// Index of the current (or, before the first reset, next) episode.
    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn state(&self) -> Option<&GameState> {
        self.state.as_ref()
    }

    /// Starts the next episode and plays opponents until the learner moves.
    pub fn reset(&mut self) -> Result<Vec<TurnRecord>> {
        if self.state.is_some() {
            self.episode += 1;
        }
        let episode_seed = seed::derive(self.seed, Stream::Environment, self.episode);
        let mut state = GameState::new(&self.game, episode_seed)?;
        state.begin_round()?;
        self.state = Some(state);
        let mut records = Vec::new();
        let done = self.advance_opponents(&mut records)?;
        if done {
            return Err(Error::Invariant("episode ended before the learner moved".into()));
        }
        Ok(records)
    }

    pub fn observe(&self) -> Result<Observation> {
        let state = self.state.as_ref().ok_or_else(|| Error::Lifecycle("reset first".into()))?;
        Ok(state.observe(self.learner))
    }

    pub fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let state = self.state.as_mut().ok_or_else(|| Error::Lifecycle("reset first".into()))?;
        let mut records = vec![state.step_turn(self.learner, action)?];
        let done = self.advance_opponents(&mut records)?;
        Ok(EnvStep { records, done })
    }

    /// Plays scripted turns until the learner is to move; true if the game ended.
    fn advance_opponents(&mut self, records: &mut Vec<TurnRecord>) -> Result<bool> {
        let state = self.state.as_mut().expect("state present");
        loop {
            match state.current_actor() {
                None => return Ok(true),
                Some(a) if a == self.learner => return Ok(false),
                Some(a) => {
                    let obs = state.observe(a);
                    let action = self.opponent.act(&obs, &mut self.opponent_rng)?;
                    records.push(state.step_turn(a, &action)?);
                }
            }
        }
    }
}
