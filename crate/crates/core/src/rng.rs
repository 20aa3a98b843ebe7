//! Seeded random streams.
//!
//! Every randomized routine takes an explicit generator. Components of a run
//! draw from independent ChaCha streams derived from one master seed, so a
//! run is reproducible bit for bit and adding a component never perturbs the
//! draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SfaRng = ChaCha8Rng;

/// Generator for stream `stream` under master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> SfaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Well-known stream identifiers.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const PAIRS: u64 = 2;
    pub const CENTERING: u64 = 10;
    pub const SVD_X: u64 = 11;
    pub const PRODUCT: u64 = 14;
    pub const SVD_PRODUCT: u64 = 15;
    pub const PILOT: u64 = 16;
    pub const OUTPUT: u64 = 17;
    pub const QUERY: u64 = 18;
    /// Base for per-trial streams in seeded ensembles.
    pub const TRIALS: u64 = 1 << 32;
}
