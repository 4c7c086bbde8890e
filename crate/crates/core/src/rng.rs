//! Deterministic random streams.
//!
//! Every Monte Carlo replica draws from its own ChaCha stream keyed by
//! `(master seed, replica index)`. Estimates are therefore identical for a
//! given seed no matter how replicas are scheduled across worker threads,
//! which is what makes verification verdicts reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Finalizer from the splitmix64 generator; decorrelates consecutive keys.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Factory for per-replica random streams derived from one master seed.
#[derive(Debug, Clone, Copy)]
pub struct StreamFactory {
    master: u64,
}

impl StreamFactory {
    pub fn new(master: u64) -> Self {
        StreamFactory { master }
    }

    pub fn master_seed(&self) -> u64 {
        self.master
    }

    /// Stream for one replica. Distinct indices give unrelated streams.
    pub fn replica(&self, index: u64) -> ChaCha8Rng {
        let key = splitmix64(self.master ^ splitmix64(index.wrapping_add(1)));
        ChaCha8Rng::seed_from_u64(key)
    }

    /// Stream for a named single-shot purpose (one trajectory, one sampler test).
    pub fn labeled(&self, label: &str) -> ChaCha8Rng {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        let key = splitmix64(self.master ^ h);
        ChaCha8Rng::seed_from_u64(key)
    }
}
