//! Reference implementations for tests and gradient checks.
//!
//! Plain `f64`, row-major nested loops over `Vec<Vec<f64>>`, direct
//! `Σ (x − y)²` costs, and the textbook linear-space backward recurrence.
//! Nothing here shares code with the batched kernels except the scalar softmin.

use crate::error::{Result, SdtwError};
use crate::forward::{softmin, SmoothTriple};

/// A single series: one row of `D` features per timestep.
pub type Series = [Vec<f64>];

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub distance: f64,
    /// 0-based cells from `(0, 0)` to `(N−1, M−1)`.
    pub path: Vec<(usize, usize)>,
    /// `false` if any argmin along the backtracked path was tied.
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveSoftDtw {
    pub loss: f64,
    /// `(N+1) x (M+1)` with the boundary row and column.
    pub r: Vec<Vec<f64>>,
    /// `N x M` alignment gradients.
    pub e: Vec<Vec<f64>>,
}

/// `d[i][j] = Σ_k (x[i][k] − y[j][k])²`.
pub fn pairwise_costs(x: &Series, y: &Series) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; y.len()]; x.len()];
    for i in 0..x.len() {
        for j in 0..y.len() {
            let mut s = 0.0;
            for k in 0..x[i].len() {
                let diff = x[i][k] - y[j][k];
                s += diff * diff;
            }
            d[i][j] = s;
        }
    }
    d
}

/// Classical DTW with squared-Euclidean cost and a backtracked optimal path.
///
/// Backtracking prefers the diagonal step, then up `(i−1, j)`, then left `(i, j−1)`.
pub fn hard_dtw(x: &Series, y: &Series) -> DtwResult {
    let d = pairwise_costs(x, y);
    hard_dtw_costs(&d)
}

pub fn hard_dtw_costs(d: &[Vec<f64>]) -> DtwResult {
    let n = d.len();
    let m = d[0].len();
    let inf = f64::INFINITY;
    let mut r = vec![vec![inf; m + 1]; n + 1];
    r[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let best = r[i - 1][j - 1].min(r[i - 1][j]).min(r[i][j - 1]);
            r[i][j] = d[i - 1][j - 1] + best;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let mut unique = true;
    let (mut i, mut j) = (n, m);
    while (i, j) != (1, 1) {
        let cands = [(i - 1, j - 1), (i - 1, j), (i, j - 1)];
        let best = cands.iter().map(|&(a, b)| r[a][b]).fold(inf, f64::min);
        let hits = cands.iter().filter(|&&(a, b)| r[a][b] == best).count();
        if hits > 1 {
            unique = false;
        }
        let &(a, b) = cands
            .iter()
            .find(|&&(a, b)| r[a][b] == best)
            .expect("a finite predecessor");
        i = a;
        j = b;
        path.push((i - 1, j - 1));
    }
    path.reverse();
    DtwResult {
        distance: r[n][m],
        path,
        unique,
    }
}

pub fn naive_softdtw(x: &Series, y: &Series, gamma: f64) -> NaiveSoftDtw {
    naive_softdtw_costs(&pairwise_costs(x, y), gamma)
}

/// Forward recurrence followed by the linear-space reverse recurrence with
/// `R[N+1][M+1] = R[N][M]`, `−∞` padding and `E[N+1][M+1] = 1`.
pub fn naive_softdtw_costs(d: &[Vec<f64>], gamma: f64) -> NaiveSoftDtw {
    let n = d.len();
    let m = d[0].len();
    let inf = f64::INFINITY;

    let mut r = vec![vec![inf; m + 2]; n + 2];
    r[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let sm = softmin(SmoothTriple::new(r[i - 1][j - 1], r[i - 1][j], r[i][j - 1]), gamma);
            r[i][j] = d[i - 1][j - 1] + sm;
        }
    }
    let loss = r[n][m];

    let mut dp = vec![vec![0.0; m + 2]; n + 2];
    for i in 1..=n {
        dp[i][1..=m].copy_from_slice(&d[i - 1]);
    }
    for row in r.iter_mut() {
        row[m + 1] = -inf;
    }
    r[n + 1] = vec![-inf; m + 2];
    r[n + 1][m + 1] = r[n][m];
    let mut e = vec![vec![0.0; m + 2]; n + 2];
    e[n + 1][m + 1] = 1.0;
    for i in (1..=n).rev() {
        for j in (1..=m).rev() {
            let a = ((r[i + 1][j] - r[i][j] - dp[i + 1][j]) / gamma).exp();
            let b = ((r[i][j + 1] - r[i][j] - dp[i][j + 1]) / gamma).exp();
            let c = ((r[i + 1][j + 1] - r[i][j] - dp[i + 1][j + 1]) / gamma).exp();
            e[i][j] = e[i + 1][j] * a + e[i][j + 1] * b + e[i + 1][j + 1] * c;
        }
    }

    let r_out = r[..=n].iter().map(|row| row[..=m].to_vec()).collect();
    let e_out = e[1..=n].iter().map(|row| row[1..=m].to_vec()).collect();
    NaiveSoftDtw {
        loss,
        r: r_out,
        e: e_out,
    }
}

/// Central differences `(f(x + h·e_k) − f(x − h·e_k)) / 2h` for every coordinate.
pub fn fd_gradient<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(SdtwError::InvalidArgument(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + step;
        let hi = f(&probe);
        probe[k] = x[k] - step;
        let lo = f(&probe);
        probe[k] = x[k];
        grad.push((hi - lo) / (2.0 * step));
    }
    Ok(grad)
}

/// Input gradients by composing `E` with the per-pair Jacobian of the cost:
/// `∂/∂x_i = Σ_j E_ij · 2(x_i − y_j)`, `∂/∂y_j = Σ_i E_ij · 2(y_j − x_i)`.
pub fn jacobian_gradients(e: &[Vec<f64>], x: &Series, y: &Series) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = x[0].len();
    let mut gx = vec![vec![0.0; dim]; x.len()];
    let mut gy = vec![vec![0.0; dim]; y.len()];
    for i in 0..x.len() {
        for j in 0..y.len() {
            for k in 0..dim {
                let diff = 2.0 * (x[i][k] - y[j][k]);
                gx[i][k] += e[i][j] * diff;
                gy[j][k] -= e[i][j] * diff;
            }
        }
    }
    (gx, gy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&a| vec![a]).collect()
    }

    #[test]
    fn hard_dtw_scalar_pair() {
        let r = hard_dtw(&col(&[2.0]), &col(&[5.0]));
        assert_eq!(r.distance, 9.0);
        assert_eq!(r.path, vec![(0, 0)]);
        assert!(r.unique);
    }

    #[test]
    fn hard_dtw_identity_is_diagonal() {
        let x = col(&[0.0, 3.0, -1.0, 2.5]);
        let r = hard_dtw(&x, &x);
        assert_eq!(r.distance, 0.0);
        assert!(r.unique);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn hard_dtw_two_by_two() {
        // d = [[0, 1], [1, 0]]
        let x = col(&[0.0, 1.0]);
        assert_eq!(pairwise_costs(&x, &x), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(hard_dtw(&x, &x).distance, 0.0);
    }

    #[test]
    fn hard_dtw_reports_ties() {
        // Every cell costs 0, so all predecessors tie.
        let r = hard_dtw(&col(&[1.0, 1.0]), &col(&[1.0, 1.0]));
        assert!(!r.unique);
        assert_eq!(r.path, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn path_steps_are_monotone() {
        let x = col(&[0.0, 2.0, 2.1, 5.0, 1.0]);
        let y = col(&[0.1, 2.0, 4.9, 5.1, 0.8, 1.2]);
        let r = hard_dtw(&x, &y);
        assert_eq!(r.path.first(), Some(&(0, 0)));
        assert_eq!(r.path.last(), Some(&(4, 5)));
        for w in r.path.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)));
        }
        let along: f64 = r.path.iter().map(|&(i, j)| (x[i][0] - y[j][0]).powi(2)).sum();
        assert!((along - r.distance).abs() < 1e-12);
    }

    #[test]
    fn naive_scalar_pair() {
        let out = naive_softdtw(&col(&[2.0]), &col(&[5.0]), 1.0);
        assert_eq!(out.loss, 9.0);
        assert_eq!(out.e, vec![vec![1.0]]);
    }

    #[test]
    fn naive_e_table_matches_cost_jacobian() {
        let x = vec![vec![0.3, -1.0], vec![1.2, 0.4], vec![-0.7, 0.9]];
        let y = vec![vec![0.0, 0.1], vec![1.0, -0.5], vec![0.2, 0.2], vec![-1.0, 1.0]];
        let d = pairwise_costs(&x, &y);
        let out = naive_softdtw_costs(&d, 1.0);
        let flat: Vec<f64> = d.concat();
        let m = y.len();
        let fd = fd_gradient(
            |v| {
                let dd: Vec<Vec<f64>> = v.chunks(m).map(<[f64]>::to_vec).collect();
                naive_softdtw_costs(&dd, 1.0).loss
            },
            &flat,
            1e-5,
        )
        .unwrap();
        for (a, b) in out.e.concat().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn naive_is_close_to_hard_dtw_for_small_gamma() {
        let x = col(&[0.0, 1.0, 3.0, 2.0, 0.5]);
        let y = col(&[0.2, 2.9, 2.1, 0.0]);
        let g = 1e-3;
        let soft = naive_softdtw(&x, &y, g).loss;
        let hard = hard_dtw(&x, &y).distance;
        let slack = g * 3f64.ln() * (x.len() + y.len() - 1) as f64;
        assert!(soft <= hard && soft >= hard - slack);
    }

    #[test]
    fn fd_of_sum_of_squares() {
        let g = fd_gradient(|v| v.iter().map(|a| a * a).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        assert!(fd_gradient(|v| v[0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn jacobian_route_for_scalar_pair() {
        let (gx, gy) = jacobian_gradients(&[vec![1.0]], &col(&[2.0]), &col(&[5.0]));
        assert_eq!((gx[0][0], gy[0][0]), (-6.0, 6.0));
    }
}
