//! Squared-Euclidean costs via the norm expansion
//! `‖x − y‖² = ‖x‖² − 2⟨x, y⟩ + ‖y‖²`.
//!
//! Both the materialized tensor and the fused per-cell path go through
//! [`expanded_sq_dist`], accumulating the inner product over features in the
//! same order, so the two modes agree bit for bit.

use rayon::prelude::*;

use crate::error::{Result, SdtwError};
use crate::ledger::{AllocationLedger, Buffer};
use crate::scalar::Real;
use crate::tensor::{CostMatrixBatch, SeriesBatch};

/// Per-timestep squared norms of both sides, `B x N` and `B x M`.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    x_sqnorms: Buffer<T>,
    y_sqnorms: Buffer<T>,
    batch: usize,
    n: usize,
    m: usize,
}

impl<T: Copy> NormCache<T> {
    #[inline]
    pub fn x_sqnorm(&self, b: usize, i: usize) -> T {
        self.x_sqnorms[b * self.n + i]
    }

    #[inline]
    pub fn y_sqnorm(&self, b: usize, j: usize) -> T {
        self.y_sqnorms[b * self.m + j]
    }

    pub fn x_sqnorms(&self) -> &[T] {
        &self.x_sqnorms
    }

    pub fn y_sqnorms(&self) -> &[T] {
        &self.y_sqnorms
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.batch, self.n, self.m)
    }
}

pub(crate) fn check_pair<T>(x: &SeriesBatch<T>, y: &SeriesBatch<T>) -> Result<()> {
    if x.batch_size() != y.batch_size() {
        return Err(SdtwError::ShapeMismatch(format!(
            "batch sizes differ: {} vs {}",
            x.batch_size(),
            y.batch_size()
        )));
    }
    if x.feature_dim() != y.feature_dim() {
        return Err(SdtwError::ShapeMismatch(format!(
            "feature dims differ: {} vs {}",
            x.feature_dim(),
            y.feature_dim()
        )));
    }
    Ok(())
}

#[inline]
fn sqnorm<T: Real>(v: &[T]) -> T {
    let mut acc = T::zero();
    for &a in v {
        acc += a * a;
    }
    acc
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&p, &q) in a.iter().zip(b) {
        acc += p * q;
    }
    acc
}

/// `(‖a‖² + ‖b‖²) − 2⟨a, b⟩` from cached norms, clamped below at zero.
/// Summing the norms first keeps the result symmetric in `(a, b)`.
#[inline]
pub(crate) fn expanded_sq_dist<T: Real>(a_sqnorm: T, b_sqnorm: T, a: &[T], b: &[T]) -> T {
    let ip = dot(a, b);
    let d = (a_sqnorm + b_sqnorm) - (ip + ip);
    if d > T::zero() {
        d
    } else {
        T::zero()
    }
}

pub fn compute_norm_cache<T: Real>(x: &SeriesBatch<T>, y: &SeriesBatch<T>) -> Result<NormCache<T>> {
    compute_norm_cache_in(x, y, None)
}

pub fn compute_norm_cache_in<T: Real>(
    x: &SeriesBatch<T>,
    y: &SeriesBatch<T>,
    ledger: Option<&AllocationLedger>,
) -> Result<NormCache<T>> {
    check_pair(x, y)?;
    let (batch, n, m) = (x.batch_size(), x.len(), y.len());
    let mut xs = Buffer::filled(batch * n, T::zero(), ledger)?;
    let mut ys = Buffer::filled(batch * m, T::zero(), ledger)?;
    for b in 0..batch {
        for i in 0..n {
            xs[b * n + i] = sqnorm(x.point(b, i));
        }
        for j in 0..m {
            ys[b * m + j] = sqnorm(y.point(b, j));
        }
    }
    Ok(NormCache {
        x_sqnorms: xs,
        y_sqnorms: ys,
        batch,
        n,
        m,
    })
}

fn check_cache<T: Copy>(x: &SeriesBatch<T>, y: &SeriesBatch<T>, cache: &NormCache<T>) -> Result<()> {
    check_pair(x, y)?;
    let dims = (x.batch_size(), x.len(), y.len());
    if cache.dims() != dims {
        return Err(SdtwError::ShapeMismatch(format!(
            "norm cache {:?} does not match inputs {:?}",
            cache.dims(),
            dims
        )));
    }
    Ok(())
}

pub fn materialize_costs<T: Real>(
    x: &SeriesBatch<T>,
    y: &SeriesBatch<T>,
    cache: &NormCache<T>,
) -> Result<CostMatrixBatch<T>> {
    materialize_costs_in(x, y, cache, None)
}

/// Fills the `B x N x M` tensor as a batched `X·Yᵀ` product, one output row per
/// `(b, i)` in parallel, then applies the norm expansion.
pub fn materialize_costs_in<T: Real>(
    x: &SeriesBatch<T>,
    y: &SeriesBatch<T>,
    cache: &NormCache<T>,
    ledger: Option<&AllocationLedger>,
) -> Result<CostMatrixBatch<T>> {
    check_cache(x, y, cache)?;
    let (batch, n, m) = (x.batch_size(), x.len(), y.len());
    let len = batch
        .checked_mul(n)
        .and_then(|v| v.checked_mul(m))
        .ok_or(SdtwError::OutOfMemory {
            requested_bytes: usize::MAX,
        })?;
    let mut data = Buffer::filled(len, T::zero(), ledger)?;
    data.par_chunks_mut(m).enumerate().for_each(|(row, out)| {
        let (b, i) = (row / n, row % n);
        let xi = x.point(b, i);
        let xn = cache.x_sqnorm(b, i);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = expanded_sq_dist(xn, cache.y_sqnorm(b, j), xi, y.point(b, j));
        }
    });
    Ok(CostMatrixBatch {
        data,
        dims: (batch, n, m),
    })
}

/// On-demand cost of DP cell `(i, j)`, 1-based over the interior, i.e. between
/// `x[b, i-1]` and `y[b, j-1]`.
pub fn cost_at<T: Real>(
    x: &SeriesBatch<T>,
    y: &SeriesBatch<T>,
    cache: &NormCache<T>,
    b: usize,
    i: usize,
    j: usize,
) -> Result<T> {
    check_cache(x, y, cache)?;
    let (batch, n, m) = cache.dims();
    if b >= batch || i == 0 || i > n || j == 0 || j > m {
        return Err(SdtwError::IndexOutOfRange { b, i, j, batch, n, m });
    }
    Ok(expanded_sq_dist(
        cache.x_sqnorm(b, i - 1),
        cache.y_sqnorm(b, j - 1),
        x.point(b, i - 1),
        y.point(b, j - 1),
    ))
}

mod sealed {
    pub trait Sealed {}
}

/// Read access to pairwise costs by 0-based timestep indices.
///
/// Implemented only by the materialized tensor and the fused evaluator.
pub trait CostSource<T>: sealed::Sealed + Sync {
    fn dims(&self) -> (usize, usize, usize);
    fn cost(&self, b: usize, i: usize, j: usize) -> T;
}

impl<T> sealed::Sealed for CostMatrixBatch<T> {}

impl<T: Real> CostSource<T> for CostMatrixBatch<T> {
    fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    fn cost(&self, b: usize, i: usize, j: usize) -> T {
        self.at(b, i, j)
    }
}

/// Fused evaluator: recomputes each cost from the inputs and the norm cache.
#[derive(Debug, Clone, Copy)]
pub struct FusedCosts<'a, T> {
    x: &'a SeriesBatch<T>,
    y: &'a SeriesBatch<T>,
    cache: &'a NormCache<T>,
}

impl<'a, T: Real> FusedCosts<'a, T> {
    pub fn new(x: &'a SeriesBatch<T>, y: &'a SeriesBatch<T>, cache: &'a NormCache<T>) -> Result<Self> {
        check_cache(x, y, cache)?;
        Ok(Self { x, y, cache })
    }
}

impl<T> sealed::Sealed for FusedCosts<'_, T> {}

impl<T: Real> CostSource<T> for FusedCosts<'_, T> {
    fn dims(&self) -> (usize, usize, usize) {
        self.cache.dims()
    }

    #[inline]
    fn cost(&self, b: usize, i: usize, j: usize) -> T {
        expanded_sq_dist(
            self.cache.x_sqnorm(b, i),
            self.cache.y_sqnorm(b, j),
            self.x.point(b, i),
            self.y.point(b, j),
        )
    }
}
