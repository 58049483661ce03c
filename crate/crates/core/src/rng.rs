//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! run seed. Independent consumers use distinct ChaCha stream ids, so changing
//! how many numbers one consumer draws never shifts another consumer's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Fixed stream offsets. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    DataGen = 3,
    Split = 4,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
