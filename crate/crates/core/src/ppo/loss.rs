use crate::agents::{joint_log_prob, policy_entropy, PolicyNet};
use crate::error::{Error, Result};
use crate::nn::log_softmax;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients<T> {
    pub clip_epsilon: T,
    pub value_coef: T,
    pub entropy_coef: T,
}

/// One stored decision with its (already normalized) advantage.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a, T> {
    pub obs: &'a [T],
    pub probe: usize,
    pub message: &'a [T],
    pub old_log_prob: T,
    pub advantage: T,
    pub ret: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub max_ratio_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: T,
    pub grads: Vec<T>,
    pub stats: LossStats,
}

/// Clipped-surrogate PPO objective with value and entropy terms:
///
/// `-mean(min(r A, clip(r, 1-eps, 1+eps) A)) + c_v mean((v - R)^2) - c_e mean(H)`
///
/// with `r = exp(log_prob - old_log_prob)`. Gradients cover every network
/// parameter and the message log-std.
pub fn ppo_loss<T: Scalar>(
    policy: &PolicyNet<T>,
    batch: &[Transition<'_, T>],
    coefs: &LossCoefficients<T>,
) -> Result<LossOutput<T>> {
    if batch.is_empty() {
        return Err(Error::Degenerate("empty minibatch".into()));
    }
    let net = &policy.params;
    let n = T::of(batch.len() as f64);
    let log_std = policy.log_std();
    let inv_var = (-(log_std + log_std)).exp();
    let eps = coefs.clip_epsilon;
    let mut grads = net.zeros_like();
    let mut log_std_grad = T::zero();
    let (mut pol, mut val, mut ent) = (T::zero(), T::zero(), T::zero());
    let (mut clipped, mut kl, mut max_dev) = (0usize, 0.0f64, 0.0f64);

    for tr in batch {
        let cache = net.forward(tr.obs)?;
        let out = policy.split(cache.output());
        let l = out.logits.len();
        let m = out.means.len();
        let logp = joint_log_prob(&out, log_std, tr.probe, tr.message);
        let ratio = (logp - tr.old_log_prob).exp();
        let surr = ratio * tr.advantage;
        let clipped_ratio = ratio.max(T::one() - eps).min(T::one() + eps);
        let surr_clipped = clipped_ratio * tr.advantage;
        pol = pol - surr.min(surr_clipped);
        if (ratio - T::one()).abs() > eps {
            clipped += 1;
        }
        let r = ratio.as_f64();
        kl += (r - 1.0) - r.ln();
        max_dev = max_dev.max((r - 1.0).abs());

        // d(policy term)/d(log_prob)
        let g_logp = if surr <= surr_clipped {
            -ratio * tr.advantage / n
        } else {
            T::zero()
        };

        let logps = log_softmax(&out.logits);
        let probs: Vec<T> = logps.iter().map(|&lp| lp.exp()).collect();
        let cat_entropy = logps
            .iter()
            .zip(&probs)
            .fold(T::zero(), |acc, (&lp, &p)| acc - p * lp);
        ent = ent + policy_entropy(&out.logits, m, log_std);
        let v_err = out.value - tr.ret;
        val = val + v_err * v_err;

        let mut g_out = vec![T::zero(); net.output_len()];
        let probe_head = net.head(crate::nn::HeadRole::ProbeLogits).expect("probe head");
        let mean_head = net.head(crate::nn::HeadRole::MessageMean).expect("message head");
        let value_head = net.head(crate::nn::HeadRole::Value).expect("value head");
        for k in 0..l {
            let onehot = if k == tr.probe { T::one() } else { T::zero() };
            let d_logp = onehot - probs[k];
            // dH/dz_k = -p_k (log p_k + H)
            let d_ent = -probs[k] * (logps[k] + cat_entropy);
            g_out[probe_head.offset + k] = g_logp * d_logp - coefs.entropy_coef * d_ent / n;
        }
        let mut sq = T::zero();
        for c in 0..m {
            let diff = tr.message[c] - out.means[c];
            g_out[mean_head.offset + c] = g_logp * diff * inv_var;
            sq = sq + diff * diff * inv_var;
        }
        log_std_grad = log_std_grad + g_logp * (sq - T::of(m as f64))
            - coefs.entropy_coef * T::of(m as f64) / n;
        g_out[value_head.offset] = T::of(2.0) * coefs.value_coef * v_err / n;
        net.backward(&cache, &g_out, &mut grads)?;
    }
    grads[policy.log_std_index()] = grads[policy.log_std_index()] + log_std_grad;

    let policy_loss = pol / n;
    let value_loss = val / n;
    let entropy = ent / n;
    let loss = policy_loss + coefs.value_coef * value_loss - coefs.entropy_coef * entropy;
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite PPO loss (policy {policy_loss}, value {value_loss}, entropy {entropy})"
        )));
    }
    let count = batch.len() as f64;
    Ok(LossOutput {
        loss,
        grads,
        stats: LossStats {
            policy_loss: policy_loss.as_f64(),
            value_loss: value_loss.as_f64(),
            entropy: entropy.as_f64(),
            clip_fraction: clipped as f64 / count,
            approx_kl: kl / count,
            max_ratio_deviation: max_dev,
        },
    })
}
