//! Counter-based random streams.
//!
//! A stream is addressed by `(master_seed, experiment_id, sample_index)`; the
//! first two form the ChaCha key and the sample index selects the ChaCha
//! stream, so any sample can be regenerated without touching the others and
//! results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub experiment_id: u64,
    pub sample_index: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, experiment_id: u64, sample_index: u64) -> Self {
        Self { master_seed, experiment_id, sample_index }
    }

    pub fn with_sample(self, sample_index: u64) -> Self {
        Self { sample_index, ..self }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.experiment_id.to_le_bytes());
        seed[16..24].copy_from_slice(b"qiclock1");
        let mut rng = ChaCha12Rng::from_seed(seed);
        rng.set_stream(self.sample_index);
        rng
    }
}

/// Stable experiment identifier from a name (FNV-1a).
pub fn experiment_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
