use crate::error::{Error, Result};
use crate::Scalar;

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_sum = logits.iter().fold(T::zero(), |acc, &z| acc + (z - max).exp()).ln();
    logits.iter().map(|&z| (z - max) - log_sum).collect()
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    log_softmax(logits).into_iter().map(T::exp).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, optionally scaled by a
/// per-class weight. Returns the loss and its gradient with respect to the
/// logits, `weight[label] * (softmax - onehot(label))`.
pub fn softmax_xent<T: Scalar>(
    logits: &[T],
    label: usize,
    class_weights: Option<&[T]>,
) -> Result<(T, Vec<T>)> {
    if logits.len() < 2 {
        return Err(Error::Config("softmax cross-entropy needs at least two logits".into()));
    }
    if label >= logits.len() {
        return Err(Error::Action(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let weight = match class_weights {
        Some(w) => {
            crate::error::check_len(logits.len(), w.len(), "class weights")?;
            w[label]
        }
        None => T::one(),
    };
    let logp = log_softmax(logits);
    let loss = -logp[label] * weight;
    let grad = logp
        .iter()
        .enumerate()
        .map(|(k, &lp)| {
            let target = if k == label { T::one() } else { T::zero() };
            (lp.exp() - target) * weight
        })
        .collect();
    Ok((loss, grad))
}
