use crate::error::{check_len, Result};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages<T> {
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
}

/// Generalized advantage estimation over a buffer that may hold several
/// episodes. `dones[t]` marks that the episode ended after step `t`;
/// `bootstrap` is the value estimate of the state following the last step.
/// Advantages are returned raw; see [`normalize_advantages`].
pub fn compute_gae<T: Scalar>(
    rewards: &[T],
    values: &[T],
    dones: &[bool],
    bootstrap: T,
    gamma: T,
    lambda: T,
) -> Result<Advantages<T>> {
    check_len(rewards.len(), values.len(), "values vs rewards")?;
    check_len(rewards.len(), dones.len(), "dones vs rewards")?;
    let n = rewards.len();
    let mut advantages = vec![T::zero(); n];
    let mut next_adv = T::zero();
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { T::zero() } else { T::one() };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(&a, &v)| a + v).collect();
    Ok(Advantages {
        advantages,
        returns,
    })
}

/// Shifts to zero mean and, unless the spread is below `1e-8`, scales to
/// unit variance.
pub fn normalize_advantages<T: Scalar>(adv: &mut [T]) {
    if adv.is_empty() {
        return;
    }
    let n = T::of(adv.len() as f64);
    let mean = adv.iter().fold(T::zero(), |a, &x| a + x) / n;
    let var = adv.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean)) / n;
    let std = var.sqrt();
    let scale = std >= T::of(1e-8);
    for a in adv.iter_mut() {
        *a = *a - mean;
        if scale {
            *a = *a / std;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undiscounted_returns() {
        let a = compute_gae(&[1.0, 0.0, 2.0], &[0.0; 3], &[false, false, true], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(a.advantages, vec![3.0, 2.0, 2.0]);
        assert_eq!(a.returns, a.advantages);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -0.2, 1.0, 0.3];
        let v = [0.1, 0.4, -0.3, 0.2];
        let d = [false, true, false, false];
        let (g, boot) = (0.9, 0.7);
        let a = compute_gae(&r, &v, &d, boot, g, 0.0).unwrap();
        for t in 0..4 {
            let next = if t + 1 < 4 { v[t + 1] } else { boot };
            let live = if d[t] { 0.0 } else { 1.0 };
            assert_eq!(a.advantages[t], r[t] + g * next * live - v[t]);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[1.0], &[0.0, 0.0], &[false], 0.0, 0.99, 0.95).is_err());
    }

    #[test]
    fn normalization_guard() {
        let mut flat = [0.5, 0.5, 0.5];
        normalize_advantages(&mut flat);
        assert_eq!(flat, [0.0, 0.0, 0.0]);
        let mut x = [1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut x);
        let mean: f64 = x.iter().sum::<f64>() / 4.0;
        let var: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
    }
}
