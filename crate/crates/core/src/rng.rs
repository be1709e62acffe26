//! Seeded random streams.
//!
//! Every run draws from ChaCha8 generators keyed by the 64-bit master seed.
//! Independent sub-streams use ChaCha's stream parameter, set to
//! `(repetition << 8) | purpose`, so adding a consumer never perturbs the
//! numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Contexts = 1,
    Policy = 2,
    Environment = 3,
    Validation = 4,
    Markov = 5,
}

pub fn substream(seed: u64, repetition: u64, purpose: Purpose) -> SimRng {
    debug_assert!(repetition < 1 << 56);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((repetition << 8) | purpose as u64);
    rng
}
