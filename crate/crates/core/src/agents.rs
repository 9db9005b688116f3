//! Agent behaviours: the scripted truthful opponent, a uniform-random
//! control, and the neural policy trained by PPO.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{argmax, Action, GameConfig, Observation};
use crate::error::{check_len, Error, Result};
use crate::nn::{log_softmax, Activation, Head, HeadRole, NetworkParams};
use crate::Scalar;

/// Starting message standard deviation of the neural policy.
pub const INITIAL_MESSAGE_STD: f64 = 0.5;

/// Reports every item it sees at its true reward and probes where the
/// incoming messages peak.
pub fn truthful_act(obs: &Observation) -> Action {
    let slots = obs.n_opponents();
    let messages = (0..slots).map(|s| obs.opponent_world(s).to_vec()).collect();
    let probe_cell = if slots == 1 {
        argmax(obs.inbox(0))
    } else {
        let mut mean = vec![0.0; obs.grid_size];
        for s in 0..slots {
            for (m, v) in mean.iter_mut().zip(obs.inbox(s)) {
                *m += v / slots as f64;
            }
        }
        argmax(&mean)
    };
    Action {
        probe_cell,
        messages,
    }
}

pub fn random_act<R: Rng + ?Sized>(obs: &Observation, rng: &mut R) -> Action {
    let probe_cell = rng.random_range(0..obs.grid_size);
    let messages = (0..obs.n_opponents())
        .map(|_| (0..obs.grid_size).map(|_| rng.random_range(0.0..=1.0)).collect())
        .collect();
    Action {
        probe_cell,
        messages,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Policy-network outputs split by head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput<T> {
    pub logits: Vec<T>,
    pub means: Vec<T>,
    pub value: T,
}

/// Shared-trunk MLP with probe-logit, message-mean and value heads. The
/// message log-std is one learned scalar kept in the network's aux slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    pub params: NetworkParams<T>,
}

impl<T: Scalar> PolicyNet<T> {
    pub fn new<R: Rng + ?Sized>(game: &GameConfig, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let len = game.grid_size;
        let msg = (game.n_agents - 1) * len;
        let mut dims = vec![game.observation_len()];
        dims.extend_from_slice(hidden);
        dims.push(len + msg + 1);
        let params = NetworkParams::init(&dims, Activation::Tanh, Activation::Identity, rng)?
            .with_heads(vec![
                Head { role: HeadRole::ProbeLogits, offset: 0, len },
                Head { role: HeadRole::MessageMean, offset: len, len: msg },
                Head { role: HeadRole::Value, offset: len + msg, len: 1 },
            ])?
            .with_aux(&[T::of(INITIAL_MESSAGE_STD.ln())]);
        Ok(Self { params })
    }

    /// Wraps loaded parameters after checking they carry the policy heads.
    pub fn from_params(params: NetworkParams<T>, game: &GameConfig) -> Result<Self> {
        let len = game.grid_size;
        let msg = (game.n_agents - 1) * len;
        let expect = [
            (HeadRole::ProbeLogits, 0, len),
            (HeadRole::MessageMean, len, msg),
            (HeadRole::Value, len + msg, 1),
        ];
        for (role, offset, width) in expect {
            match params.head(role) {
                Some(h) if h.offset == offset && h.len == width => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "policy checkpoint lacks a {role} head of width {width} at {offset}"
                    )))
                }
            }
        }
        if params.input_len() != game.observation_len() {
            return Err(Error::Schema(format!(
                "policy expects observations of width {}, game produces {}",
                params.input_len(),
                game.observation_len()
            )));
        }
        if params.aux().len() != 1 {
            return Err(Error::Schema("policy checkpoint lacks the message log-std".into()));
        }
        Ok(Self { params })
    }

    pub fn log_std(&self) -> T {
        self.params.aux()[0]
    }

    pub fn log_std_index(&self) -> usize {
        self.params.aux_offset()
    }

    pub fn split(&self, output: &[T]) -> PolicyOutput<T> {
        let head = |role| self.params.head(role).expect("policy head");
        let p = head(HeadRole::ProbeLogits);
        let m = head(HeadRole::MessageMean);
        let v = head(HeadRole::Value);
        PolicyOutput {
            logits: output[p.offset..p.offset + p.len].to_vec(),
            means: output[m.offset..m.offset + m.len].to_vec(),
            value: output[v.offset],
        }
    }

    pub fn evaluate(&self, obs: &[T]) -> Result<PolicyOutput<T>> {
        let cache = self.params.forward(obs)?;
        let out = self.split(cache.output());
        if out.logits.iter().chain(&out.means).any(|v| !v.is_finite()) || !out.value.is_finite() {
            return Err(Error::Numeric("policy network produced a non-finite output".into()));
        }
        Ok(out)
    }
}

/// `log N(x; mean, exp(log_std))`.
pub fn gaussian_log_density<T: Scalar>(x: T, mean: T, log_std: T) -> T {
    let half_log_2pi = T::of(0.5 * (2.0 * std::f64::consts::PI).ln());
    let z = (x - mean) / log_std.exp();
    -T::of(0.5) * z * z - log_std - half_log_2pi
}

/// Joint log-probability of a probe choice and a (pre-clamp) message sample.
pub fn joint_log_prob<T: Scalar>(out: &PolicyOutput<T>, log_std: T, probe: usize, message: &[T]) -> T {
    let cat = log_softmax(&out.logits)[probe];
    message
        .iter()
        .zip(&out.means)
        .fold(cat, |acc, (&x, &m)| acc + gaussian_log_density(x, m, log_std))
}

/// Categorical entropy plus the entropy of the diagonal Gaussian.
pub fn policy_entropy<T: Scalar>(logits: &[T], message_dim: usize, log_std: T) -> T {
    let logp = log_softmax(logits);
    let cat = logp.iter().fold(T::zero(), |acc, &lp| acc - lp.exp() * lp);
    let per_dim = T::of(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()) + log_std;
    cat + per_dim * T::of(message_dim as f64)
}

/// Result of one neural decision. `message` is the raw Gaussian sample the
/// log-probability refers to; the environment clamps it.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralStep {
    pub action: Action,
    pub message: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

pub fn neural_act<R: Rng + ?Sized>(
    policy: &PolicyNet<f64>,
    obs: &Observation,
    rng: &mut R,
    mode: ActMode,
) -> Result<NeuralStep> {
    check_len(policy.params.input_len(), obs.values.len(), "policy observation")?;
    let out = policy.evaluate(&obs.values)?;
    let log_std = policy.log_std();
    let (probe, message): (usize, Vec<f64>) = match mode {
        ActMode::Greedy => (argmax(&out.logits), out.means.clone()),
        ActMode::Sample => {
            let probs: Vec<f64> = log_softmax(&out.logits).into_iter().map(f64::exp).collect();
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut probe = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    probe = i;
                    break;
                }
            }
            let std = log_std.exp();
            let message = out
                .means
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + std * z
                })
                .collect();
            (probe, message)
        }
    };
    let log_prob = joint_log_prob(&out, log_std, probe, &message);
    let len = obs.grid_size;
    let messages = message.chunks(len).map(<[f64]>::to_vec).collect();
    Ok(NeuralStep {
        action: Action {
            probe_cell: probe,
            messages,
        },
        message,
        log_prob,
        value: out.value,
    })
}

/// Any behaviour that can take a turn.
#[derive(Debug, Clone)]
pub enum AgentPolicy {
    Truthful,
    Random,
    Neural { net: PolicyNet<f64>, mode: ActMode },
}

impl AgentPolicy {
    pub fn act<R: Rng + ?Sized>(&self, obs: &Observation, rng: &mut R) -> Result<Action> {
        match self {
            AgentPolicy::Truthful => Ok(truthful_act(obs)),
            AgentPolicy::Random => Ok(random_act(obs, rng)),
            AgentPolicy::Neural { net, mode } => Ok(neural_act(net, obs, rng, *mode)?.action),
        }
    }
}
