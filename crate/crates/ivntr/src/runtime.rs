//! Deterministic seeding helpers and the data-parallel map used by the
//! fan-out stages. With the `parallel` feature the map runs on rayon;
//! without it the same call is a plain sequential loop. Results keep input
//! order either way, so downstream artifacts are identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a stream tag and index into a fresh RNG seed.
/// SplitMix64-style finalizer; cheap, stateless, and collision-resistant
/// enough for the handful of streams a run uses.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based RNG: the same (base, tag, index) triple always yields the
/// same stream, independent of call order. Used everywhere randomness is
/// needed so reruns are bitwise-reproducible.
pub fn rng_at(base: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, index))
}

/// Stream tags for [`rng_at`]. One tag per independent randomness consumer.
pub mod stream {
    pub const TASK_GEN: u64 = 1;
    pub const ORACLE_SAMPLER: u64 = 2;
    pub const DATASET_SPLIT: u64 = 3;
    pub const NET_INIT: u64 = 4;
    pub const NET_BATCH: u64 = 5;
    pub const SAMPLER_NEG: u64 = 6;
    pub const REFINE: u64 = 7;
    pub const ABLATE: u64 = 8;
    pub const INVENT: u64 = 9;
}

#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Like [`par_map`] but over an index range; convenient for seed fan-out.
pub fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    par_map((0..n).collect::<Vec<_>>(), f)
}
