//! Seeded random streams.
//!
//! Every random draw comes from a ChaCha8 generator keyed by
//! `(seed, trial, purpose)`. The key is expanded with SplitMix64, so streams
//! for different trials or purposes are independent and reproducible no
//! matter which thread runs a trial or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Truth = 1,
    Sampling = 2,
    Init = 3,
    Forms = 4,
    NoiseField = 5,
    Custom = 6,
}

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `(seed, trial, purpose)`.
pub fn stream(seed: u64, trial: u64, purpose: Purpose) -> StreamRng {
    let mut state = seed;
    let mut mix = |v: u64| {
        state = splitmix64(state ^ splitmix64(v));
        state
    };
    mix(trial);
    mix(purpose as u64);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&mix(0x5EED_5EED_5EED_5EED).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
