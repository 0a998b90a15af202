//! Seed policy: one master seed fans out into named substreams so that data
//! order, parameter init, σ draws, DP noise, and sampling can be varied
//! independently without re-running everything else.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub const STREAM_DATA: &str = "data";
pub const STREAM_INIT: &str = "init";
pub const STREAM_SIGMA: &str = "sigma";
pub const STREAM_DP_NOISE: &str = "dp-noise";
pub const STREAM_SAMPLER: &str = "sampler";

/// Deterministic fan-out of a master seed into named RNG streams.
#[derive(Debug, Clone, Copy)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// A reproducible stream keyed by name.
    pub fn stream(&self, name: &str) -> ChaCha12Rng {
        self.substream(name, 0)
    }

    /// A reproducible stream keyed by name and index (e.g. per-seed repeats).
    pub fn substream(&self, name: &str, index: u64) -> ChaCha12Rng {
        let mut state = self
            .master
            .wrapping_add(fnv1a(name.as_bytes()))
            .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
