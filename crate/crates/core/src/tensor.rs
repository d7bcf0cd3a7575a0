//! Batched containers and the padded-table conventions shared by the kernels.
//!
//! DP and gradient tables are stored as `B x (N+2) x (M+2)` row-major slabs.
//! Interior cell `(i, j)` (1-based, `1 <= i <= N`, `1 <= j <= M`) lives at storage
//! `(i, j)`; row/column 0 hold the boundary and row `N+1` / column `M+1` are padding.

use crate::error::{Result, SdtwError};
use crate::ledger::{AllocationLedger, Buffer};
use crate::scalar::Real;

/// `B` sequences of length `L` with `D` features each, stored `B x L x D` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBatch<T> {
    data: Vec<T>,
    batch: usize,
    length: usize,
    features: usize,
}

impl<T: Real> SeriesBatch<T> {
    pub fn new(raw: Vec<T>, batch: usize, length: usize, features: usize) -> Result<Self> {
        for (what, v) in [("batch size", batch), ("length", length), ("feature dim", features)] {
            if v == 0 {
                return Err(SdtwError::ZeroDimension { what });
            }
        }
        let expected = batch
            .checked_mul(length)
            .and_then(|v| v.checked_mul(features))
            .unwrap_or(usize::MAX);
        if raw.len() != expected {
            return Err(SdtwError::DimensionMismatch {
                batch,
                length,
                features,
                expected,
                actual: raw.len(),
            });
        }
        if let Some(index) = raw.iter().position(|v| !v.is_finite()) {
            return Err(SdtwError::NonFinite { index });
        }
        Ok(Self {
            data: raw,
            batch,
            length,
            features,
        })
    }

    /// A single-element batch from `L` rows of `D` values.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let features = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != features) {
            return Err(SdtwError::ShapeMismatch(format!(
                "ragged rows: expected {features} features, found {}",
                r.len()
            )));
        }
        Self::new(rows.concat(), 1, rows.len(), features)
    }

    /// Stacks single-or-multi element batches of identical `(L, D)` along the batch axis.
    pub fn stack(parts: &[SeriesBatch<T>]) -> Result<Self> {
        let first = parts.first().ok_or(SdtwError::ZeroDimension { what: "batch size" })?;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut batch = 0;
        for p in parts {
            if p.length != first.length || p.features != first.features {
                return Err(SdtwError::ShapeMismatch(format!(
                    "cannot stack {}x{} with {}x{}",
                    first.length, first.features, p.length, p.features
                )));
            }
            data.extend_from_slice(&p.data);
            batch += p.batch;
        }
        Ok(Self {
            data,
            batch,
            length: first.length,
            features: first.features,
        })
    }

    /// Copies batch element `b` into its own single-element batch.
    pub fn element(&self, b: usize) -> Self {
        Self {
            data: self.sequence(b).to_vec(),
            batch: 1,
            length: self.length,
            features: self.features,
        }
    }

    pub fn cast<U: Real>(&self) -> SeriesBatch<U> {
        SeriesBatch {
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            batch: self.batch,
            length: self.length,
            features: self.features,
        }
    }
}

impl<T> SeriesBatch<T> {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn feature_dim(&self) -> usize {
        self.features
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// The `L x D` block of batch element `b`.
    pub fn sequence(&self, b: usize) -> &[T] {
        let n = self.length * self.features;
        &self.data[b * n..(b + 1) * n]
    }

    /// The feature vector of timestep `i` (0-based) of element `b`.
    #[inline]
    pub fn point(&self, b: usize, i: usize) -> &[T] {
        let start = (b * self.length + i) * self.features;
        &self.data[start..start + self.features]
    }

    /// Applies `f` to every value, keeping the shape. Used for translations
    /// and rescaling; the caller is responsible for keeping values finite.
    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self
    where
        T: Copy,
    {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            batch: self.batch,
            length: self.length,
            features: self.features,
        }
    }
}

/// Pairwise cost tensor `B x N x M`, indexed by 0-based timesteps.
#[derive(Debug, Clone)]
pub struct CostMatrixBatch<T> {
    pub(crate) data: Buffer<T>,
    pub(crate) dims: (usize, usize, usize),
}

impl<T: Copy> CostMatrixBatch<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn at(&self, b: usize, i: usize, j: usize) -> T {
        let (_, n, m) = self.dims;
        self.data[(b * n + i) * m + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn size_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<T>()
    }
}

#[inline]
pub(crate) fn padded_len(n: usize, m: usize) -> usize {
    (n + 2) * (m + 2)
}

/// Accumulated-cost table `R` with its `+∞` boundary.
#[derive(Debug, Clone)]
pub struct DpTableBatch<T> {
    pub(crate) data: Buffer<T>,
    pub(crate) dims: (usize, usize, usize),
}

impl<T: Real> DpTableBatch<T> {
    /// `R[·,0,0] = 0` and every other cell `+∞`.
    pub fn new(batch: usize, n: usize, m: usize, ledger: Option<&AllocationLedger>) -> Result<Self> {
        for (what, v) in [("batch size", batch), ("N", n), ("M", m)] {
            if v == 0 {
                return Err(SdtwError::ZeroDimension { what });
            }
        }
        let slab = padded_len(n, m);
        let len = batch.checked_mul(slab).ok_or(SdtwError::OutOfMemory {
            requested_bytes: usize::MAX,
        })?;
        let mut data = Buffer::filled(len, T::infinity(), ledger)?;
        for b in 0..batch {
            data[b * slab] = T::zero();
        }
        Ok(Self {
            data,
            dims: (batch, n, m),
        })
    }
}

impl<T: Copy> DpTableBatch<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Storage cell `(i, j)` of the padded slab, `0 <= i <= N+1`, `0 <= j <= M+1`.
    #[inline]
    pub fn at(&self, b: usize, i: usize, j: usize) -> T {
        let (_, n, m) = self.dims;
        self.data[b * padded_len(n, m) + i * (m + 2) + j]
    }

    /// `R[b, N, M]`.
    pub fn end_value(&self, b: usize) -> T {
        self.at(b, self.dims.1, self.dims.2)
    }

    pub fn slab(&self, b: usize) -> &[T] {
        let s = padded_len(self.dims.1, self.dims.2);
        &self.data[b * s..(b + 1) * s]
    }

    pub fn size_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<T>()
    }
}

/// Builds a fresh untracked `R` table; see [`DpTableBatch::new`].
pub fn init_dp_table<T: Real>(batch: usize, n: usize, m: usize) -> Result<DpTableBatch<T>> {
    DpTableBatch::new(batch, n, m, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradSpace {
    Linear,
    Log,
}

/// Alignment-gradient table `E = ∂R[N,M] / ∂d`, padded like [`DpTableBatch`].
///
/// Boundary, padding and out-of-band cells hold `0` in linear space and `-∞` in log space.
#[derive(Debug, Clone)]
pub struct GradTableBatch<T> {
    pub(crate) data: Buffer<T>,
    pub(crate) dims: (usize, usize, usize),
    pub(crate) space: GradSpace,
}

impl<T: Copy> GradTableBatch<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn space(&self) -> GradSpace {
        self.space
    }

    #[inline]
    pub fn at(&self, b: usize, i: usize, j: usize) -> T {
        let (_, n, m) = self.dims;
        self.data[b * padded_len(n, m) + i * (m + 2) + j]
    }

    pub fn slab(&self, b: usize) -> &[T] {
        let s = padded_len(self.dims.1, self.dims.2);
        &self.data[b * s..(b + 1) * s]
    }

    /// Interior `N x M` block of element `b`, row-major, 0-based.
    pub fn interior(&self, b: usize) -> Vec<T> {
        let (_, n, m) = self.dims;
        let mut out = Vec::with_capacity(n * m);
        for i in 1..=n {
            for j in 1..=m {
                out.push(self.at(b, i, j));
            }
        }
        out
    }

    pub fn size_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<T>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_batch() {
        let s = SeriesBatch::new(vec![2.0f64], 1, 1, 1).unwrap();
        assert_eq!((s.batch_size(), s.len(), s.feature_dim()), (1, 1, 1));
    }

    #[test]
    fn shape_arithmetic() {
        let s = SeriesBatch::new(vec![0.0f64; 6], 1, 3, 2).unwrap();
        assert_eq!((s.batch_size(), s.len(), s.feature_dim()), (1, 3, 2));
        assert_eq!(s.point(0, 2).len(), 2);
    }

    #[test]
    fn rejects_nan_with_index() {
        let e = SeriesBatch::new(vec![1.0f64, f64::NAN], 1, 2, 1).unwrap_err();
        assert_eq!(e, SdtwError::NonFinite { index: 1 });
        let e = SeriesBatch::new(vec![1.0f32, 2.0, f32::NEG_INFINITY], 1, 3, 1).unwrap_err();
        assert_eq!(e, SdtwError::NonFinite { index: 2 });
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(matches!(
            SeriesBatch::new(vec![0.0f64; 5], 1, 3, 2),
            Err(SdtwError::DimensionMismatch {
                expected: 6,
                actual: 5,
                ..
            })
        ));
        assert!(matches!(
            SeriesBatch::<f64>::new(vec![], 0, 3, 2),
            Err(SdtwError::ZeroDimension { .. })
        ));
    }

    #[test]
    fn stack_and_element_roundtrip() {
        let a = SeriesBatch::from_rows(&[vec![1.0f64, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = SeriesBatch::from_rows(&[vec![5.0f64, 6.0], vec![7.0, 8.0]]).unwrap();
        let s = SeriesBatch::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.batch_size(), 2);
        assert_eq!(s.point(1, 0), &[5.0, 6.0]);
        assert_eq!(s.element(0), a);
        assert_eq!(s.element(1), b);
        let c = SeriesBatch::from_rows(&[vec![1.0f64]]).unwrap();
        assert!(SeriesBatch::stack(&[a, c]).is_err());
    }

    #[test]
    fn dp_table_boundary() {
        let r = init_dp_table::<f64>(1, 1, 1).unwrap();
        assert_eq!(r.data.len(), 9);
        assert_eq!(r.at(0, 0, 0), 0.0);
        assert_eq!(r.at(0, 1, 0), f64::INFINITY);
        assert_eq!(r.at(0, 0, 1), f64::INFINITY);
    }

    #[test]
    fn dp_table_batch_slices_share_boundary() {
        let r = init_dp_table::<f32>(2, 2, 3).unwrap();
        assert_eq!(r.slab(0), r.slab(1));
        assert_eq!(r.slab(0).len(), 4 * 5);
    }

    #[test]
    fn dp_table_zero_dimension() {
        assert!(matches!(
            init_dp_table::<f64>(1, 0, 1),
            Err(SdtwError::ZeroDimension { .. })
        ));
    }

    #[test]
    fn dp_table_boundary_invariant_over_shapes() {
        for n in 1..6 {
            for m in 1..6 {
                let r = init_dp_table::<f64>(1, n, m).unwrap();
                let zeros = r.slab(0).iter().filter(|v| **v == 0.0).count();
                assert_eq!(zeros, 1);
                assert_eq!(r.at(0, 0, 0), 0.0);
                assert!((1..n + 2).all(|i| r.at(0, i, 0).is_infinite()));
                assert!((1..m + 2).all(|j| r.at(0, 0, j).is_infinite()));
            }
        }
    }

    #[test]
    fn dp_table_is_ledger_tracked() {
        let l = AllocationLedger::new();
        let r = DpTableBatch::<f32>::new(2, 3, 4, Some(&l)).unwrap();
        assert_eq!(l.live_bytes(), 2 * 5 * 6 * 4);
        assert_eq!(r.size_bytes(), l.live_bytes());
        drop(r);
        assert_eq!(l.live_bytes(), 0);
    }
}
