use rand::Rng;

use crate::error::{Error, Result};

/// Adds independent `U[-hunger, hunger]` noise to every component. A sated
/// sender (hunger 0) transmits its message unchanged and draws nothing.
/// The result is not clamped.
pub fn apply_hunger_noise<R: Rng + ?Sized>(
    intended: &[f64],
    hunger: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(hunger >= 0.0) || !hunger.is_finite() {
        return Err(Error::Invariant(format!(
            "hunger must be finite and non-negative, got {hunger}"
        )));
    }
    if hunger == 0.0 {
        return Ok(intended.to_vec());
    }
    Ok(intended
        .iter()
        .map(|&m| m + rng.random_range(-hunger..=hunger))
        .collect())
}
