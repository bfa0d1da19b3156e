//! Counter-based seed derivation.
//!
//! Every random stream in a run is keyed by `(master, repetition, stream)`
//! and mixed with SplitMix64, so adding a new consumer never shifts the
//! randomness seen by an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams used by the evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Init = 2,
    Train = 3,
    RandomInit = 4,
    TestSample = 5,
    Superclass = 6,
    SuperSplit = 7,
    SuperInit = 8,
    SuperTrain = 9,
    SuperTestSample = 10,
    Residual = 11,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive(master: u64, repetition: u64, stream: Stream) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ repetition.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ (stream as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
