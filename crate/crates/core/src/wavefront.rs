//! Anti-diagonal scheduling of the `N x M` DP grid.
//!
//! Cells with equal `p = i + j` are independent: their predecessors lie on
//! diagonals `p - 1` and `p - 2`. The executor runs one diagonal at a time
//! (all batch elements together) as a parallel-for; returning from the
//! parallel-for is the only barrier.

use rayon::prelude::*;

use crate::config::check_bandwidth;
use crate::error::{Result, SdtwError};

/// Diagonals whose `batch x length` cell count is below this run inline on the
/// calling thread.
const PAR_MIN_CELLS: usize = 512;
const PAR_CHUNK: usize = 128;

/// Default diagonal length at or below which a whole grid runs as a plain
/// row-major loop per batch element.
pub const DEFAULT_FAST_PATH_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diagonal {
    pub p: usize,
    pub i_min: usize,
    pub i_max: usize,
}

impl Diagonal {
    #[inline]
    pub fn len(&self) -> usize {
        self.i_max - self.i_min + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.i_min..=self.i_max).map(move |i| (i, self.p - i))
    }
}

/// Every in-band cell of an `n x m` grid (0-based), grouped by anti-diagonal
/// in dependency order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WavefrontPlan {
    diagonals: Vec<Diagonal>,
    n: usize,
    m: usize,
    bandwidth: usize,
}

pub fn build_wavefront_plan(n: usize, m: usize, bandwidth: usize) -> Result<WavefrontPlan> {
    if n == 0 {
        return Err(SdtwError::ZeroDimension { what: "N" });
    }
    if m == 0 {
        return Err(SdtwError::ZeroDimension { what: "M" });
    }
    check_bandwidth(n, m, bandwidth)?;
    let mut diagonals = Vec::with_capacity(n + m - 1);
    for p in 0..=n + m - 2 {
        let mut i_min = (p + 1).saturating_sub(m);
        let mut i_max = (n - 1).min(p);
        if bandwidth > 0 {
            // |i - (p - i)| <= w  <=>  (p - w) / 2 <= i <= (p + w) / 2
            i_min = i_min.max((p + 1).saturating_sub(bandwidth) / 2);
            i_max = i_max.min((p + bandwidth) / 2);
        }
        if i_min > i_max {
            // Only possible if the band disconnects the corners, which was rejected above.
            return Err(SdtwError::BandTooNarrow { bandwidth, n, m });
        }
        diagonals.push(Diagonal { p, i_min, i_max });
    }
    Ok(WavefrontPlan {
        diagonals,
        n,
        m,
        bandwidth,
    })
}

impl WavefrontPlan {
    pub fn diagonals(&self) -> &[Diagonal] {
        &self.diagonals
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn cell_count(&self) -> usize {
        self.diagonals.iter().map(Diagonal::len).sum()
    }

    pub fn max_diagonal_len(&self) -> usize {
        self.diagonals.iter().map(Diagonal::len).max().unwrap_or(0)
    }

    /// Whether 0-based `(i, j)` is an in-band grid cell.
    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.m && (self.bandwidth == 0 || i.abs_diff(j) <= self.bandwidth)
    }

    /// In-band column range `[lo, hi]` of row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> (usize, usize) {
        if self.bandwidth == 0 {
            (0, self.m - 1)
        } else {
            (i.saturating_sub(self.bandwidth), (i + self.bandwidth).min(self.m - 1))
        }
    }
}

/// Raw view of a slice for disjoint concurrent writes within one diagonal.
#[derive(Clone, Copy)]
pub(crate) struct SharedSlice<T> {
    ptr: *mut T,
    len: usize,
}

unsafe impl<T: Send> Send for SharedSlice<T> {}
unsafe impl<T: Send> Sync for SharedSlice<T> {}

impl<T: Copy> SharedSlice<T> {
    pub(crate) fn new(s: &mut [T]) -> Self {
        Self {
            ptr: s.as_mut_ptr(),
            len: s.len(),
        }
    }

    /// # Safety
    /// No other thread may write `idx` concurrently, and the slice this view was
    /// created from must outlive it without being accessed through other paths.
    #[inline]
    pub(crate) unsafe fn read(&self, idx: usize) -> T {
        debug_assert!(idx < self.len);
        *self.ptr.add(idx)
    }

    /// # Safety
    /// `idx` must be written by exactly one thread and not read concurrently.
    #[inline]
    pub(crate) unsafe fn write(&self, idx: usize, v: T) {
        debug_assert!(idx < self.len);
        *self.ptr.add(idx) = v;
    }
}

/// Runs `f(b, i)` for every batch element and every cell of `diag`, returning
/// once all calls have finished.
pub(crate) fn for_each_cell<F>(batch: usize, diag: &Diagonal, f: F) -> Result<()>
where
    F: Fn(usize, usize) -> Result<()> + Sync,
{
    let len = diag.len();
    let total = batch * len;
    if total < PAR_MIN_CELLS {
        for k in 0..total {
            f(k / len, diag.i_min + k % len)?;
        }
        Ok(())
    } else {
        (0..total)
            .into_par_iter()
            .with_min_len(PAR_CHUNK)
            .try_for_each(|k| f(k / len, diag.i_min + k % len))
    }
}
