//! Ground-truth judgments over messages.
//!
//! Both labels look at the cell a message points to, which is the first
//! maximal component (lowest index wins ties). A world with no food cannot
//! be misreported: such messages are never betrayals and always honest.

use crate::error::{check_len, Result};

use super::WorldState;

/// Index of the first maximal component. Panics on an empty slice.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// All components equal, so the pointed-to cell comes from the tie-break alone.
pub fn is_degenerate(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// True when the intended (pre-noise) message points at an empty cell of a
/// world that holds food.
pub fn betrayal_label(intended: &[f64], world: &WorldState) -> Result<bool> {
    check_len(world.len(), intended.len(), "message vs world size")?;
    if world.is_empty() {
        return Ok(false);
    }
    Ok(!world.is_occupied(argmax(intended)))
}

/// True when a received (post-noise) message points at food in the world it
/// describes.
pub fn honesty_label(transmitted: &[f64], world: &WorldState) -> Result<bool> {
    check_len(world.len(), transmitted.len(), "message vs world size")?;
    if world.is_empty() {
        return Ok(true);
    }
    Ok(world.is_occupied(argmax(transmitted)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(occupied: &[usize], len: usize) -> WorldState {
        let mut w = WorldState::new(len);
        for (id, &c) in occupied.iter().enumerate() {
            w.cells[c] = Some(id);
        }
        w
    }

    #[test]
    fn betrayal_examples() {
        let w1 = world(&[1], 5);
        assert!(!betrayal_label(&[0.1, 0.9, 0.0, 0.0, 0.0], &w1).unwrap());
        let w3 = world(&[3], 5);
        assert!(betrayal_label(&[0.9, 0.0, 0.0, 0.0, 0.0], &w3).unwrap());
        let w0 = world(&[0], 5);
        assert!(!betrayal_label(&[0.5, 0.5, 0.0, 0.0, 0.0], &w0).unwrap());
    }

    #[test]
    fn honesty_examples() {
        let w2 = world(&[2], 5);
        assert!(honesty_label(&[0.0, 0.0, 0.6, 0.0, 0.0], &w2).unwrap());
        // honest intent, noise moved the peak to an empty cell
        assert!(honesty_label(&[0.0, 0.0, 0.6, 0.0, 0.7], &w2).is_ok_and(|h| !h));
        let w0 = world(&[0], 5);
        let zeros = [0.0; 5];
        assert!(is_degenerate(&zeros));
        assert!(honesty_label(&zeros, &w0).unwrap());
    }

    #[test]
    fn empty_world_is_never_betrayed() {
        let w = WorldState::new(5);
        assert!(!betrayal_label(&[0.0, 0.0, 0.0, 0.0, 1.0], &w).unwrap());
        assert!(honesty_label(&[0.0, 0.0, 0.0, 0.0, 1.0], &w).unwrap());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let w = WorldState::new(5);
        assert!(betrayal_label(&[1.0, 0.0], &w).is_err());
        assert!(honesty_label(&[1.0, 0.0], &w).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.7, 0.7, 0.1]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.05, 0.8, 0.1, 0.0, -0.02]), 1);
    }
}
