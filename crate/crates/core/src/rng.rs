//! Reproducible randomness.
//!
//! A single 64-bit seed fans out into independent named streams: the label is
//! hashed with FNV-1a, mixed into the seed with SplitMix64, and the result seeds
//! a ChaCha8 generator. ChaCha output is platform independent, so identical
//! `(seed, label)` pairs give identical draws everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Shape4, Tensor4};

pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn derive(&self, label: &str) -> u64 {
        splitmix64(self.seed ^ splitmix64(fnv1a(label)))
    }

    /// Child stream for a named consumer.
    pub fn child(&self, label: &str) -> SeedStream {
        SeedStream::new(self.derive(label))
    }

    pub fn rng(&self, label: &str) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.derive(label))
    }
}

pub fn uniform_tensor(rng: &mut impl Rng, shape: Shape4, lo: f64, hi: f64) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi))
}
