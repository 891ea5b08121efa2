//! Named random streams derived from a single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Streams used by the pipeline. Each one gets an independent sub-seed so
/// that perturbing one component leaves the others untouched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Split,
    Init,
    Batches,
    Sampling,
    Dropout,
    Pairing,
}

impl Stream {
    fn label(self) -> &'static str {
        match self {
            Stream::Split => "split",
            Stream::Init => "init",
            Stream::Batches => "batches",
            Stream::Sampling => "sampling",
            Stream::Dropout => "dropout",
            Stream::Pairing => "pairing",
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sub_seed(seed: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix64(seed), |acc, b| splitmix64(acc ^ u64::from(b)))
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    Rng::seed_from_u64(sub_seed(seed, which.label()))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
