//! Soft-DTW barycenters by first-order optimization.
//!
//! The objective is `Σ_k w_k · sdtw(z, x_k)` over a set of single-series members;
//! [`solve_barycenter`] minimizes it with Adam and keeps the best iterate seen.

use rayon::prelude::*;

use crate::config::{CostMode, SdtwConfig};
use crate::engine::SoftDtw;
use crate::error::{Result, SdtwError};
use crate::scalar::Real;
use crate::tensor::SeriesBatch;

const CONVERGED_AFTER: usize = 5;

#[derive(Debug, Clone)]
pub struct BarycenterProblem<T> {
    pub series: Vec<SeriesBatch<T>>,
    pub target_length: usize,
    pub gamma: T,
    pub bandwidth: usize,
    /// Per-member weights; `None` means all ones.
    pub weights: Option<Vec<T>>,
}

impl<T: Real> BarycenterProblem<T> {
    pub fn new(series: Vec<SeriesBatch<T>>, target_length: usize, gamma: T) -> Result<Self> {
        let p = Self {
            series,
            target_length,
            gamma,
            bandwidth: 0,
            weights: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_bandwidth(mut self, bandwidth: usize) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        self.weights = Some(weights);
        self.validate()?;
        Ok(self)
    }

    pub fn member_count(&self) -> usize {
        self.series.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.series.first().map_or(0, SeriesBatch::feature_dim)
    }

    pub fn weight(&self, k: usize) -> T {
        self.weights.as_ref().map_or(T::one(), |w| w[k])
    }

    fn config(&self) -> SdtwConfig<T> {
        SdtwConfig::new(self.gamma)
            .with_bandwidth(self.bandwidth)
            .with_cost_mode(CostMode::Fused)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.series.first() else {
            return Err(SdtwError::ZeroDimension { what: "K" });
        };
        if self.target_length == 0 {
            return Err(SdtwError::ZeroDimension { what: "target_length" });
        }
        let d = first.feature_dim();
        for (k, s) in self.series.iter().enumerate() {
            if s.batch_size() != 1 {
                return Err(SdtwError::ShapeMismatch(format!(
                    "member {k} has batch size {}, expected 1",
                    s.batch_size()
                )));
            }
            if s.feature_dim() != d {
                return Err(SdtwError::ShapeMismatch(format!(
                    "member {k} has feature dim {}, expected {d}",
                    s.feature_dim()
                )));
            }
        }
        self.config().validate_gamma()?;
        if let Some(w) = &self.weights {
            let k = self.series.len();
            if w.len() != k {
                return Err(SdtwError::InvalidArgument(format!(
                    "{} weights for {k} members",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite() || *v < T::zero()) {
                return Err(SdtwError::InvalidArgument(
                    "weights must be finite and nonnegative".into(),
                ));
            }
            let sum: T = w.iter().copied().sum();
            if sum == T::zero() {
                return Err(SdtwError::InvalidArgument("all weights are zero".into()));
            }
            let kt = T::from_usize(k).expect("member count fits the scalar type");
            if (sum - kt).abs() > T::epsilon().sqrt() * kt {
                return Err(SdtwError::InvalidArgument(format!(
                    "weights sum to {sum}, expected {k}"
                )));
            }
        }
        Ok(())
    }
}

/// `(value, grad_z)` of `Σ_k w_k · sdtw(z, x_k)`; `grad_z` is `L_z x D` row-major.
///
/// Members are evaluated in parallel and summed in member order, so the result
/// does not depend on the worker count.
pub fn barycenter_objective<T: Real>(z: &SeriesBatch<T>, prob: &BarycenterProblem<T>) -> Result<(T, Vec<T>)> {
    prob.validate()?;
    if z.batch_size() != 1 || z.feature_dim() != prob.feature_dim() {
        return Err(SdtwError::ShapeMismatch(format!(
            "barycenter must be 1 x L x {}, got {} x {} x {}",
            prob.feature_dim(),
            z.batch_size(),
            z.len(),
            z.feature_dim()
        )));
    }
    let engine = SoftDtw::new(prob.config())?;
    let parts: Vec<(T, Vec<T>)> = prob
        .series
        .par_iter()
        .map(|x| {
            let (loss, g) = engine.loss_and_grad(z, x)?;
            Ok((loss[0], g.grad_x().to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut value = T::zero();
    let mut grad = vec![T::zero(); z.as_slice().len()];
    for (k, (loss, g)) in parts.into_iter().enumerate() {
        let w = prob.weight(k);
        value += w * loss;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += w * v;
        }
    }
    Ok((value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamOptions<T> {
    pub max_iters: usize,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub tol: T,
}

impl<T: Real> Default for AdamOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 200,
            lr: T::lit(0.01),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            tol: T::lit(1e-6),
        }
    }
}

impl<T: Real> AdamOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v > T::zero() && v < T::one();
        if !(self.lr > T::zero() && self.lr.is_finite()) {
            return Err(SdtwError::InvalidArgument(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(SdtwError::InvalidArgument("beta1 and beta2 must lie in (0, 1)".into()));
        }
        if !(self.eps > T::zero() && self.tol >= T::zero()) {
            return Err(SdtwError::InvalidArgument(
                "eps must be positive and tol nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: usize,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, opts: &AdamOptions<T>) -> Self {
        Self {
            step: 0,
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            lr: opts.lr,
            beta1: opts.beta1,
            beta2: opts.beta2,
            eps: opts.eps,
        }
    }

    /// One bias-corrected update of `params` in place.
    pub fn update(&mut self, params: &mut [T], grad: &[T]) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (k, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
            let m = b1 * self.first_moment[k] + (T::one() - b1) * g;
            let v = b2 * self.second_moment[k] + (T::one() - b2) * g * g;
            self.first_moment[k] = m;
            self.second_moment[k] = v;
            *p -= self.lr * (m / c1) / ((v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init<T> {
    /// Pointwise mean of the members; needs every member at `target_length`.
    EuclideanMean,
    /// Member `k`, linearly resampled to `target_length` if needed.
    MemberCopy(usize),
    UserSupplied(SeriesBatch<T>),
}

impl<T: Real> Init<T> {
    /// Euclidean mean when every member already has the target length,
    /// otherwise a copy of the first member.
    pub fn default_for(prob: &BarycenterProblem<T>) -> Self {
        if prob.series.iter().all(|s| s.len() == prob.target_length) {
            Init::EuclideanMean
        } else {
            Init::MemberCopy(0)
        }
    }

    pub fn build(&self, prob: &BarycenterProblem<T>) -> Result<SeriesBatch<T>> {
        let (l, d) = (prob.target_length, prob.feature_dim());
        match self {
            Init::EuclideanMean => {
                if let Some((k, s)) = prob.series.iter().enumerate().find(|(_, s)| s.len() != l) {
                    return Err(SdtwError::InvalidArgument(format!(
                        "euclidean mean needs equal lengths; member {k} has {} != {l}",
                        s.len()
                    )));
                }
                let mut acc = vec![T::zero(); l * d];
                for s in &prob.series {
                    for (a, &v) in acc.iter_mut().zip(s.as_slice()) {
                        *a += v;
                    }
                }
                let k = T::from_usize(prob.series.len()).expect("member count fits the scalar type");
                acc.iter_mut().for_each(|a| *a /= k);
                SeriesBatch::new(acc, 1, l, d)
            }
            Init::MemberCopy(k) => {
                let s = prob.series.get(*k).ok_or_else(|| {
                    SdtwError::InvalidArgument(format!("member {k} out of range for {} members", prob.series.len()))
                })?;
                resample(s, l)
            }
            Init::UserSupplied(z) => {
                if z.batch_size() != 1 || z.len() != l || z.feature_dim() != d {
                    return Err(SdtwError::ShapeMismatch(format!(
                        "initial barycenter must be 1 x {l} x {d}, got {} x {} x {}",
                        z.batch_size(),
                        z.len(),
                        z.feature_dim()
                    )));
                }
                Ok(z.clone())
            }
        }
    }
}

/// Linear interpolation of a single series onto `len` evenly spaced points.
fn resample<T: Real>(s: &SeriesBatch<T>, len: usize) -> Result<SeriesBatch<T>> {
    let (n, d) = (s.len(), s.feature_dim());
    if n == len {
        return Ok(s.clone());
    }
    let mut out = Vec::with_capacity(len * d);
    for t in 0..len {
        let pos = if len == 1 {
            0.0
        } else {
            t as f64 * (n - 1) as f64 / (len - 1) as f64
        };
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let frac = T::lit(pos - lo as f64);
        let (a, b) = (s.point(0, lo), s.point(0, hi));
        out.extend(a.iter().zip(b).map(|(&u, &v)| u + frac * (v - u)));
    }
    SeriesBatch::new(out, 1, len, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterTrace<T> {
    /// Objective at the initial point followed by one value per step.
    pub objective_per_iteration: Vec<T>,
    /// Best iterate encountered.
    pub final_z: SeriesBatch<T>,
    pub best_objective: T,
    pub iterations_run: usize,
    pub converged: bool,
}

impl<T: Real> BarycenterTrace<T> {
    /// Running minimum of the objective trace.
    pub fn best_so_far(&self) -> Vec<T> {
        let mut best = T::infinity();
        self.objective_per_iteration
            .iter()
            .map(|&v| {
                best = best.min(v);
                best
            })
            .collect()
    }
}

pub fn solve_barycenter<T: Real>(
    prob: &BarycenterProblem<T>,
    init: &Init<T>,
    opts: &AdamOptions<T>,
) -> Result<BarycenterTrace<T>> {
    prob.validate()?;
    opts.validate()?;
    let z0 = init.build(prob)?;
    let (l, d) = (z0.len(), z0.feature_dim());
    let mut z = z0.clone().into_vec();

    let (mut obj, mut grad) = barycenter_objective(&z0, prob)?;
    let mut trace = vec![obj];
    let (mut best, mut best_z) = (obj, z.clone());
    let mut adam = AdamState::new(z.len(), opts);
    let mut quiet = 0;
    let mut converged = false;

    for _ in 0..opts.max_iters {
        adam.update(&mut z, &grad);
        let current = SeriesBatch::new(z.clone(), 1, l, d)?;
        let (next, g) = barycenter_objective(&current, prob)?;
        trace.push(next);
        if next < best {
            best = next;
            best_z.clone_from(&z);
        }
        let scale = T::one().max(next.abs());
        quiet = if (next - obj).abs() / scale < opts.tol {
            quiet + 1
        } else {
            0
        };
        obj = next;
        grad = g;
        if quiet >= CONVERGED_AFTER {
            converged = true;
            break;
        }
    }

    Ok(BarycenterTrace {
        iterations_run: trace.len() - 1,
        objective_per_iteration: trace,
        final_z: SeriesBatch::new(best_z, 1, l, d)?,
        best_objective: best,
        converged,
    })
}
