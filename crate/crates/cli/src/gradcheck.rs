//! Finite-difference checks of the analytic input gradients.
//!
//! The reference is a central difference of the naive single-pair loss in
//! `f64`, so it shares nothing with the batched kernels under test.

use std::fmt;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdtw_core::oracle::{fd_gradient, naive_softdtw};
use sdtw_core::{BackwardSpace, CostMode, Real, SdtwConfig, SeriesBatch, SoftDtw};

use crate::Precision;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub sizes: Vec<usize>,
    pub gammas: Vec<f64>,
    pub dims: Vec<usize>,
    pub modes: Vec<CostMode>,
    pub backward: BackwardSpace,
    pub precision: Precision,
    pub seed: u64,
    pub tolerance: f64,
    /// Inputs are drawn uniformly from `[-scale, scale]`.
    pub scale: f64,
    pub step: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            sizes: (1..=6).collect(),
            gammas: vec![0.1, 1.0, 10.0],
            dims: vec![1, 3],
            modes: vec![CostMode::Unfused, CostMode::Fused],
            backward: BackwardSpace::Log,
            precision: Precision::F64,
            seed: 0,
            tolerance: 1e-5,
            scale: 1.0,
            step: 1e-6,
        }
    }
}

/// Worst result over every instance sharing one `(gamma, mode)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub gamma: f64,
    pub mode: CostMode,
    pub worst_rel_err: f64,
    pub non_finite: usize,
    pub instances: usize,
    /// `(N, M, D)` of the worst instance.
    pub worst_shape: (usize, usize, usize),
}

impl GroupReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.non_finite == 0 && self.worst_rel_err <= tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed(self.tolerance))
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.worst_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gamma,mode,instances,worst_rel_err,non_finite,worst_shape,result")?;
        for g in &self.groups {
            let (n, m, d) = g.worst_shape;
            writeln!(
                f,
                "{:?},{},{},{:e},{},{n}x{m}x{d},{}",
                g.gamma,
                g.mode,
                g.instances,
                g.worst_rel_err,
                g.non_finite,
                if g.passed(self.tolerance) { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

pub fn run(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    anyhow::ensure!(
        !opts.sizes.is_empty() && opts.sizes.iter().all(|&s| s >= 1),
        "sizes must be >= 1"
    );
    anyhow::ensure!(opts.dims.iter().all(|&d| d >= 1), "dims must be >= 1");
    anyhow::ensure!(opts.step > 0.0 && opts.scale > 0.0, "step and scale must be positive");
    let mut groups = Vec::new();
    for &gamma in &opts.gammas {
        for &mode in &opts.modes {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut g = GroupReport {
                gamma,
                mode,
                worst_rel_err: 0.0,
                non_finite: 0,
                instances: 0,
                worst_shape: (0, 0, 0),
            };
            for &dim in &opts.dims {
                for &n in &opts.sizes {
                    // One square and one rectangular instance per size.
                    for m in [n, rng.random_range(1..=n)] {
                        let x = uniform(&mut rng, n, dim, opts.scale);
                        let y = uniform(&mut rng, m, dim, opts.scale);
                        let cfg = SdtwConfig::new(gamma).with_cost_mode(mode).with_backward(opts.backward);
                        let (gx, gy) = match opts.precision {
                            Precision::F32 => analytic::<f32>(cfg, &x, &y)?,
                            Precision::F64 => analytic::<f64>(cfg, &x, &y)?,
                        };
                        let (fx, fy) = numeric(&x, &y, gamma, opts.step)?;
                        g.instances += 1;
                        for (a, r) in gx.iter().zip(&fx).chain(gy.iter().zip(&fy)) {
                            if !a.is_finite() {
                                g.non_finite += 1;
                                continue;
                            }
                            let err = (a - r).abs() / r.abs().max(1.0);
                            if err > g.worst_rel_err {
                                g.worst_rel_err = err;
                                g.worst_shape = (n, m, dim);
                            }
                        }
                    }
                }
            }
            groups.push(g);
        }
    }
    Ok(GradcheckReport {
        groups,
        tolerance: opts.tolerance,
    })
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, dim: usize, scale: f64) -> SeriesBatch<f64> {
    let raw = (0..len * dim).map(|_| rng.random_range(-scale..=scale)).collect();
    SeriesBatch::new(raw, 1, len, dim).expect("positive shape")
}

fn analytic<T: Real>(cfg: SdtwConfig<f64>, x: &SeriesBatch<f64>, y: &SeriesBatch<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = SdtwConfig::new(T::lit(cfg.gamma))
        .with_cost_mode(cfg.cost_mode)
        .with_backward(cfg.backward_space)
        .with_bandwidth(cfg.bandwidth);
    let (xt, yt) = (x.cast::<T>(), y.cast::<T>());
    let (_, g) = SoftDtw::new(cfg)?.loss_and_grad(&xt, &yt)?;
    let widen = |v: &[T]| v.iter().map(|a| a.as_f64()).collect();
    Ok((widen(g.grad_x()), widen(g.grad_y())))
}

fn numeric(x: &SeriesBatch<f64>, y: &SeriesBatch<f64>, gamma: f64, step: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.feature_dim();
    let rows = |v: &[f64]| v.chunks(d).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let (xr, yr) = (rows(x.as_slice()), rows(y.as_slice()));
    let fx = fd_gradient(|v| naive_softdtw(&rows(v), &yr, gamma).loss, x.as_slice(), step)?;
    let fy = fd_gradient(|v| naive_softdtw(&xr, &rows(v), gamma).loss, y.as_slice(), step)?;
    Ok((fx, fy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let rep = run(&GradcheckOptions::default()).unwrap();
        assert_eq!(rep.groups.len(), 6);
        assert!(rep.passed(), "{rep}");
        assert!(rep.worst() < 1e-5);
    }

    #[test]
    fn size_one_is_trivial() {
        let rep = run(&GradcheckOptions {
            sizes: vec![1],
            ..GradcheckOptions::default()
        })
        .unwrap();
        assert!(rep.passed());
        assert!(rep.worst() < 1e-8, "{rep}");
    }

    #[test]
    fn impossible_tolerance_fails() {
        let rep = run(&GradcheckOptions {
            tolerance: 0.0,
            sizes: vec![4],
            ..GradcheckOptions::default()
        })
        .unwrap();
        assert!(!rep.passed());
        assert!(rep.to_string().contains("FAIL"));
    }
}
