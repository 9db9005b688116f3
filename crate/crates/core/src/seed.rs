//! Seed derivation. Every random stream in a run is a `ChaCha8Rng` seeded
//! from the run seed plus a stream tag, so streams never alias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named random streams of a training or collection run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Environment = 2,
    Policy = 3,
    Opponent = 4,
    Minibatch = 5,
    Folds = 6,
    Baseline = 7,
    Detector = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream as u64)).wrapping_add(index))
}

pub fn rng(seed: u64, stream: Stream, index: u64) -> Rng {
    Rng::seed_from_u64(derive(seed, stream, index))
}
