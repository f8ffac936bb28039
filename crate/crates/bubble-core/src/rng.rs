//! Reproducible parallel randomness.
//!
//! Every Monte Carlo consumer derives an independent ChaCha stream from
//! (master seed, stream index). The same pair always yields the same draws,
//! whatever the thread count or execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub master_seed: u64,
}

impl RngPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Independent stream for the given index (path, particle, replicate...).
    pub fn stream(&self, index: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        rng
    }

    /// Namespaced substream; keeps unrelated consumers (paths vs resampling)
    /// off each other's streams.
    pub fn substream(&self, namespace: u64, index: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed ^ namespace.rotate_left(17));
        rng.set_stream(index);
        rng
    }
}
