//! Seeded synthetic datasets.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sdtw_core::SeriesBatch;

use crate::format::write_series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    /// Zero series with one unit-height block.
    Blockwave,
    /// Sum of three random sinusoids per feature.
    #[value(name = "sine_mix", alias = "sine-mix")]
    SineMix,
    /// Cumulative Gaussian steps.
    #[value(name = "random_walk", alias = "random-walk")]
    RandomWalk,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Blockwave => "blockwave",
            Kind::SineMix => "sine_mix",
            Kind::RandomWalk => "random_walk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub kind: Kind,
    pub count: usize,
    pub length: usize,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

/// `count` single-series batches, identical for identical specs.
pub fn generate(spec: &GenSpec) -> Result<Vec<SeriesBatch<f64>>> {
    ensure!(
        spec.count >= 1 && spec.length >= 1 && spec.dim >= 1,
        "count, length and dim must be >= 1"
    );
    ensure!(
        spec.noise >= 0.0 && spec.noise.is_finite(),
        "noise must be a finite nonnegative number"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise)?;
    let unit = Normal::new(0.0, 1.0)?;
    let (l, d) = (spec.length, spec.dim);
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let mut v = vec![0.0; l * d];
        match spec.kind {
            Kind::Blockwave => {
                let lf = l as f64;
                let start = rng.random_range((0.1 * lf).floor() as usize..=(0.6 * lf).floor() as usize);
                let min_width = (0.2 * lf).ceil() as usize;
                let width = rng.random_range(min_width..=((0.3 * lf).floor() as usize).max(min_width));
                for t in start..(start + width).min(l) {
                    v[t * d..(t + 1) * d].fill(1.0);
                }
            }
            Kind::SineMix => {
                for k in 0..d {
                    for _ in 0..3 {
                        let freq = rng.random_range(0.5..4.0) * std::f64::consts::TAU / l as f64;
                        let phase = rng.random_range(0.0..std::f64::consts::TAU);
                        let amp = rng.random_range(0.2..1.0);
                        for t in 0..l {
                            v[t * d + k] += amp * (freq * t as f64 + phase).sin();
                        }
                    }
                }
            }
            Kind::RandomWalk => {
                for k in 0..d {
                    let mut acc = 0.0;
                    for t in 0..l {
                        acc += unit.sample(&mut rng) / (l as f64).sqrt();
                        v[t * d + k] = acc;
                    }
                }
            }
        }
        if spec.noise > 0.0 {
            v.iter_mut().for_each(|x| *x += noise.sample(&mut rng));
        }
        out.push(SeriesBatch::new(v, 1, l, d)?);
    }
    Ok(out)
}

/// Writes `series_000.csv`, `series_001.csv`, … into `dir` and returns the paths.
pub fn write_dataset(dir: &Path, series: &[SeriesBatch<f64>]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    series
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let p = dir.join(format!("series_{k:03}.csv"));
            write_series(&p, s, 0)?;
            Ok(p)
        })
        .collect()
}

/// `b x l x d` standard-normal values, used for benchmark inputs.
pub fn normal_batch(rng: &mut ChaCha8Rng, b: usize, l: usize, d: usize) -> Result<SeriesBatch<f64>> {
    let unit = Normal::new(0.0, 1.0)?;
    Ok(SeriesBatch::new(
        (0..b * l * d).map(|_| unit.sample(rng)).collect(),
        b,
        l,
        d,
    )?)
}
