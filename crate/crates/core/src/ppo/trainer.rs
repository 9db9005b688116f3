use serde::{Deserialize, Serialize};

use crate::agents::{neural_act, ActMode, AgentPolicy, PolicyNet};
use crate::env::{GameConfig, TurnRecord};
use crate::error::Result;
use crate::nn::{clip_grad_norm, Adam, AdamConfig};
use crate::seed::{self, Stream};
use crate::telemetry::MetricRow;

use super::gae::{compute_gae, normalize_advantages};
use super::loss::{ppo_loss, LossCoefficients, LossStats, Transition};
use super::rollout::LearnerEnv;
use super::PpoConfig;

/// Index of the learning agent; every other agent plays the truthful script.
pub const LEARNER: usize = 0;

/// Training reward for a learner turn after reward shaping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shaped {
    pub reward: f64,
    pub p_betray: f64,
}

/// Sees every turn in play order. Returning `Some` for a learner turn
/// replaces the raw reward used for training and adds the detector columns
/// to that turn's metric row.
pub trait LearnerHook {
    fn on_turn(&mut self, episode: u64, record: &TurnRecord, learner: usize) -> Result<Option<Shaped>>;
}

pub struct NoHook;

impl LearnerHook for NoHook {
    fn on_turn(&mut self, _: u64, _: &TurnRecord, _: usize) -> Result<Option<Shaped>> {
        Ok(None)
    }
}

/// Callback for every played turn, e.g. an episode log writer.
pub type TurnObserver<'a> = dyn FnMut(u64, &TurnRecord) -> Result<()> + 'a;

struct Recorder<'a> {
    hook: &'a mut dyn LearnerHook,
    observer: &'a mut TurnObserver<'a>,
    metrics: Vec<MetricRow>,
    step: u64,
}

impl<'a> Recorder<'a> {
    /// Logs `records` and returns the training reward of the learner turn
    /// among them, if any.
    fn process(&mut self, episode: u64, records: &[TurnRecord]) -> Result<Option<f64>> {
        let mut learner_reward = None;
        for record in records {
            (self.observer)(episode, record)?;
            let shaped = self.hook.on_turn(episode, record, LEARNER)?;
            let mut row = MetricRow::from_record(self.step, episode, record);
            self.step += 1;
            if record.agent == LEARNER {
                learner_reward = Some(match shaped {
                    Some(s) => {
                        row.p_betray = Some(s.p_betray);
                        row.true_betrayal = Some(record.any_betrayal() as u8);
                        s.reward
                    }
                    None => record.reward,
                });
            }
            self.metrics.push(row);
        }
        Ok(learner_reward)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub timesteps: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Clip fraction of the very first minibatch after the rollout; zero,
    /// since the parameters still equal the ones that collected the data.
    pub first_clip_fraction: f64,
    pub first_max_ratio_deviation: f64,
    pub message_log_std: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyNet<f64>,
    pub metrics: Vec<MetricRow>,
    pub updates: Vec<UpdateStats>,
    pub episodes: u64,
}

#[derive(Default)]
struct Buffer {
    obs: Vec<f64>,
    probes: Vec<usize>,
    messages: Vec<f64>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
}

pub fn initial_policy(ppo: &PpoConfig, game: &GameConfig) -> Result<PolicyNet<f64>> {
    PolicyNet::new(game, &ppo.hidden, &mut seed::rng(ppo.seed, Stream::Init, 0))
}

/// PPO against truthful opponents with no reward shaping.
pub fn train(ppo: &PpoConfig, game: &GameConfig) -> Result<TrainOutcome> {
    train_with(ppo, game, &mut NoHook, &mut |_, _| Ok(()))
}

pub fn train_with<'a>(
    ppo: &PpoConfig,
    game: &GameConfig,
    hook: &'a mut dyn LearnerHook,
    observer: &'a mut TurnObserver<'a>,
) -> Result<TrainOutcome> {
    ppo.validate()?;
    game.validate()?;
    let mut policy = initial_policy(ppo, game)?;
    let mut recorder = Recorder {
        hook,
        observer,
        metrics: Vec::new(),
        step: 0,
    };
    if ppo.total_timesteps == 0 {
        return Ok(TrainOutcome {
            policy,
            metrics: Vec::new(),
            updates: Vec::new(),
            episodes: 0,
        });
    }

    let mut env = LearnerEnv::new(game, LEARNER, AgentPolicy::Truthful, ppo.seed)?;
    let opening = env.reset()?;
    recorder.process(env.episode(), &opening)?;
    let mut obs = env.observe()?;

    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: ppo.learning_rate,
            ..AdamConfig::default()
        },
        policy.params.len(),
    );
    let mut policy_rng = seed::rng(ppo.seed, Stream::Policy, 0);
    let mut batch_rng = seed::rng(ppo.seed, Stream::Minibatch, 0);
    let coefs = LossCoefficients {
        clip_epsilon: ppo.clip_epsilon,
        value_coef: ppo.value_coef,
        entropy_coef: ppo.entropy_coef,
    };
    let obs_len = game.observation_len();
    let msg_len = (game.n_agents - 1) * game.grid_size;
    let mut updates = Vec::new();
    let mut collected = 0u64;

    while collected < ppo.total_timesteps {
        let len = (ppo.total_timesteps - collected).min(ppo.rollout_length as u64) as usize;
        let mut buf = Buffer::default();
        for _ in 0..len {
            let decision = neural_act(&policy, &obs, &mut policy_rng, ActMode::Sample)?;
            let step = env.step(&decision.action)?;
            let reward = recorder
                .process(env.episode(), &step.records)?
                .expect("learner turn is the first record of a step");
            buf.obs.extend_from_slice(&obs.values);
            buf.probes.push(decision.action.probe_cell);
            buf.messages.extend_from_slice(&decision.message);
            buf.log_probs.push(decision.log_prob);
            buf.values.push(decision.value);
            buf.rewards.push(reward);
            buf.dones.push(step.done);
            if step.done {
                let opening = env.reset()?;
                recorder.process(env.episode(), &opening)?;
            }
            obs = env.observe()?;
        }
        collected += len as u64;

        let bootstrap = policy.evaluate(&obs.values)?.value;
        let gae = compute_gae(
            &buf.rewards,
            &buf.values,
            &buf.dones,
            bootstrap,
            ppo.gamma,
            ppo.gae_lambda,
        )?;

        let mut indices: Vec<usize> = (0..len).collect();
        let mut sums = LossStats::default();
        let mut batches = 0usize;
        let mut first: Option<LossStats> = None;
        for _ in 0..ppo.update_epochs {
            rand::seq::SliceRandom::shuffle(indices.as_mut_slice(), &mut batch_rng);
            for chunk in indices.chunks(ppo.minibatch_size) {
                let mut adv: Vec<f64> = chunk.iter().map(|&i| gae.advantages[i]).collect();
                normalize_advantages(&mut adv);
                let batch: Vec<Transition<'_, f64>> = chunk
                    .iter()
                    .zip(&adv)
                    .map(|(&i, &a)| Transition {
                        obs: &buf.obs[i * obs_len..(i + 1) * obs_len],
                        probe: buf.probes[i],
                        message: &buf.messages[i * msg_len..(i + 1) * msg_len],
                        old_log_prob: buf.log_probs[i],
                        advantage: a,
                        ret: gae.returns[i],
                    })
                    .collect();
                let mut out = ppo_loss(&policy, &batch, &coefs)?;
                first.get_or_insert(out.stats);
                clip_grad_norm(&mut out.grads, ppo.max_grad_norm);
                adam.step(policy.params.values_mut(), &out.grads);
                sums.policy_loss += out.stats.policy_loss;
                sums.value_loss += out.stats.value_loss;
                sums.entropy += out.stats.entropy;
                sums.clip_fraction += out.stats.clip_fraction;
                sums.approx_kl += out.stats.approx_kl;
                batches += 1;
            }
        }
        let k = batches as f64;
        let first = first.unwrap_or_default();
        updates.push(UpdateStats {
            timesteps: collected,
            policy_loss: sums.policy_loss / k,
            value_loss: sums.value_loss / k,
            entropy: sums.entropy / k,
            clip_fraction: sums.clip_fraction / k,
            approx_kl: sums.approx_kl / k,
            first_clip_fraction: first.clip_fraction,
            first_max_ratio_deviation: first.max_ratio_deviation,
            message_log_std: policy.log_std(),
            mean_reward: buf.rewards.iter().sum::<f64>() / len as f64,
        });
    }

    Ok(TrainOutcome {
        policy,
        metrics: recorder.metrics,
        updates,
        episodes: env.episode() + 1,
    })
}

/// Plays `timesteps` learner turns with a fixed policy in the same harness
/// as training. Used for scripted controls.
pub fn run_scripted(
    learner: &AgentPolicy,
    timesteps: u64,
    game: &GameConfig,
    seed_value: u64,
) -> Result<Vec<MetricRow>> {
    let mut hook = NoHook;
    let mut observer = |_: u64, _: &TurnRecord| Ok(());
    let mut recorder = Recorder {
        hook: &mut hook,
        observer: &mut observer,
        metrics: Vec::new(),
        step: 0,
    };
    if timesteps == 0 {
        return Ok(Vec::new());
    }
    let mut env = LearnerEnv::new(game, LEARNER, AgentPolicy::Truthful, seed_value)?;
    let mut rng = seed::rng(seed_value, Stream::Policy, 0);
    let opening = env.reset()?;
    recorder.process(env.episode(), &opening)?;
    for _ in 0..timesteps {
        let obs = env.observe()?;
        let action = learner.act(&obs, &mut rng)?;
        let step = env.step(&action)?;
        recorder.process(env.episode(), &step.records)?;
        if step.done {
            let opening = env.reset()?;
            recorder.process(env.episode(), &opening)?;
        }
    }
    Ok(recorder.metrics)
}
