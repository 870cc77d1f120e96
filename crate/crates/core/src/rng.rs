//! Deterministic random streams derived from a single master seed.
//!
//! Every consumer of randomness asks for a stream by name plus a list of
//! integer coordinates (generation, member index, ...). The same
//! `(seed, name, coordinates)` triple always yields the same stream, no
//! matter which thread asks for it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Seed value for the named stream at the given coordinates.
    pub fn derive(&self, name: &str, coords: &[u64]) -> u64 {
        let mut h = splitmix64(self.master ^ fnv1a(name.as_bytes()));
        for &c in coords {
            h = splitmix64(h ^ splitmix64(c.wrapping_add(0x2545_f491_4f6c_dd1d)));
        }
        h
    }

    pub fn stream(&self, name: &str, coords: &[u64]) -> Stream {
        Stream::seed_from_u64(self.derive(name, coords))
    }
}
