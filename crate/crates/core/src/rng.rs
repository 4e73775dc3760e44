//! Seeded randomness.
//!
//! Every random draw in the crate comes from a PCG-XSL-RR 128/64 generator
//! (`rand_pcg::Pcg64`, O'Neill 2014). Independent substreams are derived from
//! a base seed and a key path (subject index, epoch, tree number, ...) by
//! folding the key through SplitMix64, so results never depend on scheduling.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub use rand::Rng;
pub type Prng = rand_pcg::Pcg64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the root stream of `seed`.
pub fn from_seed(seed: u64) -> Prng {
    substream(seed, &[])
}

/// Generator for the substream of `seed` identified by `key`.
pub fn substream(seed: u64, key: &[u64]) -> Prng {
    let mut h = splitmix64(seed);
    for &k in key {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(GOLDEN)));
    }
    Prng::seed_from_u64(h)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
