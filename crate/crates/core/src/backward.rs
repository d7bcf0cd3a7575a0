//! Reverse sweep for `E = ∂R[N,M] / ∂d` and the input gradients built from it.
//!
//! The sweep overwrites the forward table in place: when a cell is visited its
//! `R` value is copied to a small rolling buffer (three diagonals, or two rows
//! on the row-major path) and the cell then receives its gradient entry. Peak
//! storage is therefore one padded table plus `O(B(N + M))` scratch.

use rayon::prelude::*;

use crate::config::{BackwardSpace, SdtwConfig};
use crate::cost::{check_pair, CostSource};
use crate::engine::SoftDtw;
use crate::error::{Result, SdtwError};
use crate::forward::SmoothTriple;
use crate::ledger::{AllocationLedger, Buffer};
use crate::scalar::Real;
use crate::tensor::{padded_len, DpTableBatch, GradSpace, GradTableBatch, SeriesBatch};
use crate::wavefront::{build_wavefront_plan, for_each_cell, SharedSlice, WavefrontPlan};

/// `m + log(e^{a−m} + e^{b−m} + e^{c−m})` with `m = max(a, b, c)`.
pub fn logsumexp3<T: Real>(t: SmoothTriple<T>) -> T {
    lse3(t.a, t.b, t.c)
}

#[inline]
pub(crate) fn lse3<T: Real>(a: T, b: T, c: T) -> T {
    let m = a.max(b).max(c);
    if m.is_infinite() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// Log transition weights from interior cell `(i, j)` to its successors
/// `(i+1, j)`, `(i, j+1)` and `(i+1, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogTransitionWeights<T> {
    pub alpha: T,
    pub beta: T,
    pub delta: T,
}

impl<T: Real> LogTransitionWeights<T> {
    /// Reads a completed forward table; `(i, j)` is 1-based. A successor whose
    /// `R` is `+∞` (padding or out of band) gets weight `-∞`.
    pub fn at<C: CostSource<T>>(r: &DpTableBatch<T>, costs: &C, gamma: T, b: usize, i: usize, j: usize) -> Self {
        let here = r.at(b, i, j);
        let w = |si: usize, sj: usize| {
            let next = r.at(b, si, sj);
            if next == T::infinity() {
                T::neg_infinity()
            } else {
                (next - here - costs.cost(b, si - 1, sj - 1)) / gamma
            }
        };
        Self {
            alpha: w(i + 1, j),
            beta: w(i, j + 1),
            delta: w(i + 1, j + 1),
        }
    }
}

/// Successor of a cell: its forward value, gradient entry and cost.
type Succ<T> = Option<(T, T, T)>;

#[inline]
fn log_cell<T: Real>(r_here: T, succ: [Succ<T>; 3], gamma: T) -> T {
    let term = |s: Succ<T>| match s {
        // The weight is <= 0 in exact arithmetic; clamping removes rounding excess
        // that would otherwise accumulate along long paths.
        Some((r_s, g_s, d_s)) => g_s + ((r_s - r_here - d_s) / gamma).min(T::zero()),
        None => T::neg_infinity(),
    };
    lse3(term(succ[0]), term(succ[1]), term(succ[2]))
}

#[inline]
fn linear_cell<T: Real>(r_here: T, succ: [Succ<T>; 3], gamma: T) -> T {
    let mut acc = T::zero();
    for (r_s, g_s, d_s) in succ.into_iter().flatten() {
        acc += g_s * ((r_s - r_here - d_s) / gamma).exp();
    }
    acc
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SweepParams<T> {
    gamma: T,
    space: BackwardSpace,
    finalize_space: GradSpace,
}

impl<T: Real> SweepParams<T> {
    #[inline]
    fn cell(&self, r_here: T, succ: [Succ<T>; 3]) -> T {
        match self.space {
            BackwardSpace::Log => log_cell(r_here, succ, self.gamma),
            BackwardSpace::Linear => linear_cell(r_here, succ, self.gamma),
        }
    }

    fn end_value(&self) -> T {
        match self.space {
            BackwardSpace::Log => T::zero(),
            BackwardSpace::Linear => T::one(),
        }
    }
}

pub(crate) fn run_backward<T: Real, C: CostSource<T>>(
    mut table: DpTableBatch<T>,
    costs: &C,
    plan: &WavefrontPlan,
    params: SweepParams<T>,
    fast_path_threshold: usize,
    ledger: Option<&AllocationLedger>,
) -> Result<GradTableBatch<T>> {
    let (batch, n, m) = table.dims;
    if costs.dims() != table.dims || plan.dims() != (n, m) {
        return Err(SdtwError::ShapeMismatch(format!(
            "table {:?} vs costs {:?} vs plan {:?}",
            table.dims,
            costs.dims(),
            plan.dims()
        )));
    }
    if let Some(b) = (0..batch).find(|&b| !table.end_value(b).is_finite()) {
        return Err(SdtwError::TableIncomplete { b, i: n, j: m });
    }
    if plan.max_diagonal_len() <= fast_path_threshold {
        let mut scratch = Buffer::filled(batch * 2 * (m + 2), T::zero(), ledger)?;
        backward_rows(&mut table, &mut scratch, costs, plan, params)?;
    } else {
        let mut scratch = Buffer::filled(3 * batch * n, T::zero(), ledger)?;
        backward_wavefront(&mut table, &mut scratch, costs, plan, params)?;
    }
    finalize(&mut table, plan, params);
    let DpTableBatch { data, dims } = table;
    Ok(GradTableBatch {
        data,
        dims,
        space: params.finalize_space,
    })
}

fn backward_wavefront<T: Real, C: CostSource<T>>(
    table: &mut DpTableBatch<T>,
    scratch: &mut [T],
    costs: &C,
    plan: &WavefrontPlan,
    params: SweepParams<T>,
) -> Result<()> {
    let (batch, n, m) = table.dims;
    let slab = padded_len(n, m);
    let w = m + 2;
    let t = SharedSlice::new(&mut table.data);
    let saved = SharedSlice::new(scratch);
    let slot = |q: usize, b: usize, i: usize| ((q % 3) * batch + b) * n + i;
    for diag in plan.diagonals().iter().rev() {
        let p = diag.p;
        for_each_cell(batch, diag, |b, i| {
            let j = p - i;
            let at = b * slab + (i + 1) * w + (j + 1);
            // SAFETY: (b, i) is visited once per diagonal and is the only writer of
            // its table cell and of its slot for diagonal p. Successor reads touch
            // diagonals p+1 and p+2, which are complete; slot p % 3 last held
            // diagonal p+3, which nothing on this diagonal reads.
            unsafe {
                let r_here = t.read(at);
                if !r_here.is_finite() {
                    return Err(SdtwError::TableIncomplete { b, i: i + 1, j: j + 1 });
                }
                saved.write(slot(p, b, i), r_here);
                let g = if i + 1 == n && j + 1 == m {
                    params.end_value()
                } else {
                    let down = plan.contains(i + 1, j).then(|| {
                        (
                            saved.read(slot(p + 1, b, i + 1)),
                            t.read(at + w),
                            costs.cost(b, i + 1, j),
                        )
                    });
                    let right = plan
                        .contains(i, j + 1)
                        .then(|| (saved.read(slot(p + 1, b, i)), t.read(at + 1), costs.cost(b, i, j + 1)));
                    let both = plan.contains(i + 1, j + 1).then(|| {
                        (
                            saved.read(slot(p + 2, b, i + 1)),
                            t.read(at + w + 1),
                            costs.cost(b, i + 1, j + 1),
                        )
                    });
                    params.cell(r_here, [down, right, both])
                };
                t.write(at, g);
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn backward_rows<T: Real, C: CostSource<T>>(
    table: &mut DpTableBatch<T>,
    scratch: &mut [T],
    costs: &C,
    plan: &WavefrontPlan,
    params: SweepParams<T>,
) -> Result<()> {
    let (_, n, m) = table.dims;
    let w = m + 2;
    table
        .data
        .par_chunks_mut(padded_len(n, m))
        .zip(scratch.par_chunks_mut(2 * w))
        .enumerate()
        .try_for_each(|(b, (t, rows))| {
            let (mut cur, mut next) = rows.split_at_mut(w);
            for i in (0..n).rev() {
                let (lo, hi) = plan.row_range(i);
                for j in lo..=hi {
                    let v = t[(i + 1) * w + j + 1];
                    if !v.is_finite() {
                        return Err(SdtwError::TableIncomplete { b, i: i + 1, j: j + 1 });
                    }
                    cur[j + 1] = v;
                }
                for j in (lo..=hi).rev() {
                    let at = (i + 1) * w + j + 1;
                    t[at] = if i + 1 == n && j + 1 == m {
                        params.end_value()
                    } else {
                        let down = plan
                            .contains(i + 1, j)
                            .then(|| (next[j + 1], t[at + w], costs.cost(b, i + 1, j)));
                        let right = plan
                            .contains(i, j + 1)
                            .then(|| (cur[j + 2], t[at + 1], costs.cost(b, i, j + 1)));
                        let both = plan
                            .contains(i + 1, j + 1)
                            .then(|| (next[j + 2], t[at + w + 1], costs.cost(b, i + 1, j + 1)));
                        params.cell(cur[j + 1], [down, right, both])
                    };
                }
                std::mem::swap(&mut cur, &mut next);
            }
            Ok(())
        })
}

/// One pass over the whole table: interior in-band cells are mapped to the
/// requested space, everything else becomes the zero-mass marker.
fn finalize<T: Real>(table: &mut DpTableBatch<T>, plan: &WavefrontPlan, params: SweepParams<T>) {
    let (_, n, m) = table.dims;
    let w = m + 2;
    let empty = match params.finalize_space {
        GradSpace::Linear => T::zero(),
        GradSpace::Log => T::neg_infinity(),
    };
    let map = |v: T| match (params.space, params.finalize_space) {
        (BackwardSpace::Log, GradSpace::Linear) => v.min(T::zero()).exp(),
        (BackwardSpace::Linear, GradSpace::Log) => v.ln(),
        _ => v,
    };
    table.data.par_chunks_mut(padded_len(n, m)).for_each(|t| {
        for si in 0..n + 2 {
            for sj in 0..w {
                let v = &mut t[si * w + sj];
                let interior = (1..=n).contains(&si) && (1..=m).contains(&sj);
                *v = if interior && plan.contains(si - 1, sj - 1) {
                    map(*v)
                } else {
                    empty
                };
            }
        }
    });
}

fn sweep<T: Real, C: CostSource<T>>(
    r: DpTableBatch<T>,
    costs: &C,
    cfg: &SdtwConfig<T>,
    space: BackwardSpace,
    finalize_space: GradSpace,
) -> Result<GradTableBatch<T>> {
    cfg.validate_gamma()?;
    let (_, n, m) = r.dims();
    let plan = build_wavefront_plan(n, m, cfg.bandwidth)?;
    let params = SweepParams {
        gamma: cfg.gamma,
        space,
        finalize_space,
    };
    run_backward(
        r,
        costs,
        &plan,
        params,
        crate::wavefront::DEFAULT_FAST_PATH_THRESHOLD,
        None,
    )
}

/// Log-space backward sweep; returns `E = exp(Ē)` with `E[N, M] = 1`.
///
/// Consumes the forward table, whose storage is reused for the result.
pub fn backward_log<T: Real, C: CostSource<T>>(
    r: DpTableBatch<T>,
    costs: &C,
    cfg: &SdtwConfig<T>,
) -> Result<GradTableBatch<T>> {
    sweep(r, costs, cfg, BackwardSpace::Log, GradSpace::Linear)
}

/// Like [`backward_log`] but leaves the table in log space (`Ē`, `-∞` outside the band).
pub fn backward_log_raw<T: Real, C: CostSource<T>>(
    r: DpTableBatch<T>,
    costs: &C,
    cfg: &SdtwConfig<T>,
) -> Result<GradTableBatch<T>> {
    sweep(r, costs, cfg, BackwardSpace::Log, GradSpace::Log)
}

/// Reference recurrence `E[i,j] = a·E[i+1,j] + b·E[i,j+1] + c·E[i+1,j+1]` with
/// `a = exp((R[i+1,j] − R[i,j] − d[i+1,j]) / γ)` and likewise for `b`, `c`.
///
/// Numerically fragile on purpose: overflow shows up as non-finite entries,
/// never as an error.
pub fn backward_linear<T: Real, C: CostSource<T>>(
    r: DpTableBatch<T>,
    costs: &C,
    cfg: &SdtwConfig<T>,
) -> Result<GradTableBatch<T>> {
    sweep(r, costs, cfg, BackwardSpace::Linear, GradSpace::Linear)
}

pub(crate) fn sweep_params<T: Real>(gamma: T, space: BackwardSpace) -> SweepParams<T> {
    SweepParams {
        gamma,
        space,
        finalize_space: GradSpace::Linear,
    }
}

/// Gradients of the batch losses with respect to both input batches.
#[derive(Debug, Clone)]
pub struct InputGradients<T> {
    grad_x: Buffer<T>,
    grad_y: Buffer<T>,
    batch: usize,
    n: usize,
    m: usize,
    features: usize,
}

impl<T: Real> InputGradients<T> {
    /// `B x N x D`, laid out like the `x` batch.
    pub fn grad_x(&self) -> &[T] {
        &self.grad_x
    }

    /// `B x M x D`, laid out like the `y` batch.
    pub fn grad_y(&self) -> &[T] {
        &self.grad_y
    }

    pub fn grad_x_at(&self, b: usize, i: usize) -> &[T] {
        let s = (b * self.n + i) * self.features;
        &self.grad_x[s..s + self.features]
    }

    pub fn grad_y_at(&self, b: usize, j: usize) -> &[T] {
        let s = (b * self.m + j) * self.features;
        &self.grad_y[s..s + self.features]
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.batch, self.n, self.m, self.features)
    }

    pub fn is_finite(&self) -> bool {
        self.grad_x.iter().chain(self.grad_y.iter()).all(|v| v.is_finite())
    }

    /// Gradient with respect to `x` as a series batch; fails if non-finite.
    pub fn grad_x_series(&self) -> Result<SeriesBatch<T>> {
        SeriesBatch::new(self.grad_x.to_vec(), self.batch, self.n, self.features)
    }

    pub fn grad_y_series(&self) -> Result<SeriesBatch<T>> {
        SeriesBatch::new(self.grad_y.to_vec(), self.batch, self.m, self.features)
    }
}

/// `∂/∂x_i = 2(x_i Σ_j E_ij − Σ_j E_ij y_j)` and
/// `∂/∂y_j = 2(y_j Σ_i E_ij − Σ_i E_ij x_i)`, from row/column marginals of `E`
/// and batched `E·Y`, `Eᵀ·X` products; the cost tensor is never needed.
pub fn input_gradients<T: Real>(
    e: &GradTableBatch<T>,
    x: &SeriesBatch<T>,
    y: &SeriesBatch<T>,
) -> Result<InputGradients<T>> {
    input_gradients_in(e, x, y, None)
}

pub fn input_gradients_in<T: Real>(
    e: &GradTableBatch<T>,
    x: &SeriesBatch<T>,
    y: &SeriesBatch<T>,
    ledger: Option<&AllocationLedger>,
) -> Result<InputGradients<T>> {
    check_pair(x, y)?;
    if e.space() != GradSpace::Linear {
        return Err(SdtwError::LogSpaceTable);
    }
    let (batch, n, m) = e.dims();
    if (x.batch_size(), x.len(), y.len()) != (batch, n, m) {
        return Err(SdtwError::ShapeMismatch(format!(
            "gradient table {:?} does not match inputs ({}, {}, {})",
            e.dims(),
            x.batch_size(),
            x.len(),
            y.len()
        )));
    }
    let d = x.feature_dim();
    let w = m + 2;
    let two = T::lit(2.0);

    let mut row_mass = Buffer::filled(batch * n, T::zero(), ledger)?;
    let mut col_mass = Buffer::filled(batch * m, T::zero(), ledger)?;
    row_mass
        .par_chunks_mut(n)
        .zip(col_mass.par_chunks_mut(m))
        .enumerate()
        .for_each(|(b, (rows, cols))| {
            let t = e.slab(b);
            for i in 0..n {
                let row = &t[(i + 1) * w + 1..(i + 1) * w + 1 + m];
                rows[i] = row.iter().copied().sum();
                for (c, &v) in cols.iter_mut().zip(row) {
                    *c += v;
                }
            }
        });

    let mut grad_x = Buffer::filled(batch * n * d, T::zero(), ledger)?;
    grad_x.par_chunks_mut(d).enumerate().for_each(|(row, g)| {
        let (b, i) = (row / n, row % n);
        let erow = &e.slab(b)[(i + 1) * w + 1..(i + 1) * w + 1 + m];
        for (j, &eij) in erow.iter().enumerate() {
            if eij != T::zero() {
                for (gk, &yk) in g.iter_mut().zip(y.point(b, j)) {
                    *gk += eij * yk;
                }
            }
        }
        let mass = row_mass[row];
        for (gk, &xk) in g.iter_mut().zip(x.point(b, i)) {
            *gk = two * (xk * mass - *gk);
        }
    });

    let mut grad_y = Buffer::filled(batch * m * d, T::zero(), ledger)?;
    grad_y.par_chunks_mut(m * d).enumerate().for_each(|(b, gb)| {
        let t = e.slab(b);
        for i in 0..n {
            let xi = x.point(b, i);
            for j in 0..m {
                let eij = t[(i + 1) * w + j + 1];
                if eij != T::zero() {
                    for (gk, &xk) in gb[j * d..(j + 1) * d].iter_mut().zip(xi) {
                        *gk += eij * xk;
                    }
                }
            }
        }
        for j in 0..m {
            let mass = col_mass[b * m + j];
            for (gk, &yk) in gb[j * d..(j + 1) * d].iter_mut().zip(y.point(b, j)) {
                *gk = two * (yk * mass - *gk);
            }
        }
    });

    Ok(InputGradients {
        grad_x,
        grad_y,
        batch,
        n,
        m,
        features: d,
    })
}

/// Losses and input gradients in one call, without ledger tracking.
pub fn loss_and_gradients<T: Real>(
    x: &SeriesBatch<T>,
    y: &SeriesBatch<T>,
    cfg: &SdtwConfig<T>,
) -> Result<(Vec<T>, InputGradients<T>)> {
    SoftDtw::new(*cfg)?.loss_and_grad(x, y)
}
