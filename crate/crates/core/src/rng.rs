//! Counter-based seed splitting.
//!
//! Every random stream in the simulator is a [`ChaCha8Rng`] whose seed is
//! derived from a parent seed and a path of labels. Two streams with different
//! paths are statistically independent, and a stream never depends on how many
//! numbers other streams consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

pub type SimRng = ChaCha8Rng;

/// Stream labels used by the simulation pipeline.
pub mod stream {
    pub const THROW: u64 = 0x7468_726f;
    pub const DEPLOYMENT: u64 = 1;
    pub const SHADOWING: u64 = 2;
    pub const KMEANS: u64 = 3;
    pub const PILOTS: u64 = 4;
    pub const MONTE_CARLO: u64 = 5;
    pub const FADING: u64 = 8;
    pub const DRAW: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a label path.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

/// RNG for the stream identified by `(parent, path)`.
pub fn stream_rng(parent: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(parent, path))
}

/// Draws a circularly-symmetric complex Gaussian sample CN(0, `variance`).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_path_same_stream() {
        let mut r1 = stream_rng(42, &[1, 2]);
        let mut r2 = stream_rng(42, &[1, 2]);
        let a: Vec<u64> = (0..8).map(|_| r1.random()).collect();
        let b: Vec<u64> = (0..8).map(|_| r2.random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_paths_distinct_seeds() {
        let seeds = [
            derive_seed(42, &[]),
            derive_seed(42, &[0]),
            derive_seed(42, &[1]),
            derive_seed(42, &[0, 1]),
            derive_seed(42, &[1, 0]),
            derive_seed(43, &[0]),
        ];
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert_ne!(seeds[i], seeds[j], "{i} vs {j}");
            }
        }
    }
}
