#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdtw_core::SeriesBatch;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_batch(rng: &mut ChaCha8Rng, b: usize, l: usize, d: usize) -> SeriesBatch<f64> {
    let raw = (0..b * l * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    SeriesBatch::new(raw, b, l, d).unwrap()
}

/// Batch element `b` as one row per timestep.
pub fn rows(s: &SeriesBatch<f64>, b: usize) -> Vec<Vec<f64>> {
    (0..s.len()).map(|i| s.point(b, i).to_vec()).collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    sdtw_core::rel_diff(a, b)
}
