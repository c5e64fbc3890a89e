//! Deterministic random substreams.
//!
//! Every stochastic evaluation draws from a [`Stream`] derived from the master
//! seed by a path of integer tags (evaluation index, probe, shift offset, ...).
//! Two runs with the same seed and configuration therefore consume identical
//! random numbers regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
        }
    }

    /// Substream identified by `tag`. Distinct tags give unrelated streams.
    pub fn child(self, tag: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(tag.wrapping_add(0x632B_E59B_D9B4_E019))),
        }
    }

    pub fn key(self) -> u64 {
        self.key
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
