//! Counter-based random streams.
//!
//! Every random quantity in a study is drawn from its own ChaCha20 stream,
//! keyed by the master seed and addressed by `(replication, purpose)`. Streams
//! never overlap, so data generation, pilot selection and subsample draws are
//! independent of one another and of the order in which replications run.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a stream is used for. The index on `Subsample` / `Uniform` separates
/// draws for different target sizes within one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Covariates,
    Responses,
    Pilot,
    Misspecify,
    Subsample(u16),
    Uniform(u16),
    Other(u16),
}

impl Purpose {
    fn code(self) -> u64 {
        // top two bits of the 16-bit slot select the family, low bits the index
        match self {
            Purpose::Covariates => 1,
            Purpose::Responses => 2,
            Purpose::Pilot => 3,
            Purpose::Misspecify => 4,
            Purpose::Subsample(i) => 0x4000 | (i as u64 & 0x3fff),
            Purpose::Uniform(i) => 0x8000 | (i as u64 & 0x3fff),
            Purpose::Other(i) => 0xc000 | (i as u64 & 0x3fff),
        }
    }
}

/// Factory for independent, reproducible RNG streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Stream for `purpose` within `replication`.
    pub fn stream(&self, replication: u64, purpose: Purpose) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream((replication << 16) | purpose.code());
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
