//! Seeding and variate generation for the simulation designs.
//!
//! Streams are ChaCha8 keyed by a splitmix64 hash of `(base_seed, index)`,
//! so replication `r` draws the same numbers however the work is scheduled.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::normal::norm_ppf;

/// Name recorded in report metadata.
pub const GENERATOR_NAME: &str = "ChaCha8 (splitmix64-keyed streams)";

/// One round of the splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `index` under `base_seed`.
pub fn replication_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Random stream with inverse-CDF normal draws.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent sub-stream of the same seed.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        norm_ppf(self.uniform())
    }

    /// `(χ²₁ − 1)/√2`, mean zero and unit variance.
    pub fn centered_chi2(&mut self) -> f64 {
        let z = self.standard_normal();
        (z * z - 1.0) * core::f64::consts::FRAC_1_SQRT_2
    }
}
