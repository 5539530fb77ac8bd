//! Seed derivation.
//!
//! Every stochastic component receives its own generator, derived from the
//! global seed plus a tuple of indices. Parallel work therefore never shares
//! generator state, and results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each of `parts` into a new 64-bit seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng_from(base: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, parts))
}

/// Named streams used by the pipeline, so that changing one stage's
/// consumption never perturbs another stage.
pub mod stream {
    pub const GENERATOR: u64 = 1;
    pub const NAS: u64 = 2;
    pub const FINAL_TRAIN: u64 = 3;
    pub const LOGREG_TUNE: u64 = 4;
    pub const GBDT_TUNE: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
    pub const PERMUTATION: u64 = 7;
    pub const SHAP: u64 = 8;
    pub const TIES: u64 = 9;
}
