use rayon::prelude::*;

use crate::config::SdtwConfig;
use crate::cost::CostSource;
use crate::engine::SoftDtw;
use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::{padded_len, DpTableBatch, SeriesBatch};
use crate::wavefront::{for_each_cell, SharedSlice, WavefrontPlan};

/// Three candidate values of a smoothed min/max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothTriple<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T: Real> SmoothTriple<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        Self { a, b, c }
    }

    /// The max-shift `m = max(a, b, c)`.
    pub fn max(&self) -> T {
        self.a.max(self.b).max(self.c)
    }

    pub fn min(&self) -> T {
        self.a.min(self.b).min(self.c)
    }
}

/// `-γ log(e^{-a/γ} + e^{-b/γ} + e^{-c/γ})`, shifted by the minimum so large
/// arguments never overflow.
pub fn softmin<T: Real>(t: SmoothTriple<T>, gamma: T) -> T {
    softmin3(t.a, t.b, t.c, gamma)
}

#[inline]
pub(crate) fn softmin3<T: Real>(a: T, b: T, c: T, gamma: T) -> T {
    let m = a.min(b).min(c);
    if m.is_infinite() {
        return m;
    }
    let s = (-(a - m) / gamma).exp() + (-(b - m) / gamma).exp() + (-(c - m) / gamma).exp();
    m - gamma * s.ln()
}

/// Fills `table` over the cells of `plan` with
/// `R[i,j] = d(i,j) + softmin(R[i-1,j-1], R[i-1,j], R[i,j-1])`.
pub(crate) fn run_forward<T: Real, C: CostSource<T>>(
    table: &mut DpTableBatch<T>,
    costs: &C,
    plan: &WavefrontPlan,
    gamma: T,
    fast_path_threshold: usize,
) {
    if plan.max_diagonal_len() <= fast_path_threshold {
        forward_rows(table, costs, plan, gamma);
    } else {
        forward_wavefront(table, costs, plan, gamma);
    }
}

fn forward_wavefront<T: Real, C: CostSource<T>>(
    table: &mut DpTableBatch<T>,
    costs: &C,
    plan: &WavefrontPlan,
    gamma: T,
) {
    let (batch, n, m) = table.dims;
    let slab = padded_len(n, m);
    let w = m + 2;
    let r = SharedSlice::new(&mut table.data);
    for diag in plan.diagonals() {
        let res = for_each_cell(batch, diag, |b, i| {
            let j = diag.p - i;
            let at = b * slab + (i + 1) * w + (j + 1);
            // SAFETY: each (b, i) on this diagonal is visited once and writes only
            // its own cell; the three reads hit diagonals p-1 and p-2, which are
            // complete and no longer written.
            unsafe {
                let v = softmin3(r.read(at - w - 1), r.read(at - w), r.read(at - 1), gamma);
                r.write(at, costs.cost(b, i, j) + v);
            }
            Ok(())
        });
        debug_assert!(res.is_ok());
    }
}

fn forward_rows<T: Real, C: CostSource<T>>(table: &mut DpTableBatch<T>, costs: &C, plan: &WavefrontPlan, gamma: T) {
    let (_, n, m) = table.dims;
    let w = m + 2;
    table
        .data
        .par_chunks_mut(padded_len(n, m))
        .enumerate()
        .for_each(|(b, r)| {
            for i in 0..n {
                let (lo, hi) = plan.row_range(i);
                for j in lo..=hi {
                    let at = (i + 1) * w + (j + 1);
                    let v = softmin3(r[at - w - 1], r[at - w], r[at - 1], gamma);
                    r[at] = costs.cost(b, i, j) + v;
                }
            }
        });
}

/// Soft-DTW losses `R[b, N, M]` and the filled table, without ledger tracking.
pub fn forward<T: Real>(
    x: &SeriesBatch<T>,
    y: &SeriesBatch<T>,
    cfg: &SdtwConfig<T>,
) -> Result<(Vec<T>, DpTableBatch<T>)> {
    let out = SoftDtw::new(*cfg)?.forward(x, y)?;
    Ok((out.loss, out.table))
}

/// `sdtw(x, y) − ½(sdtw(x, x) + sdtw(y, y))` per batch element; needs `N = M`.
pub fn forward_normalized<T: Real>(x: &SeriesBatch<T>, y: &SeriesBatch<T>, cfg: &SdtwConfig<T>) -> Result<Vec<T>> {
    SoftDtw::new(cfg.with_normalized(true))?.normalized_loss(x, y)
}
