mod common;

use common::{random_batch, rel, rng, rows};
use rand::Rng;
use sdtw_core::oracle::{hard_dtw, jacobian_gradients, naive_softdtw};
use sdtw_core::{
    backward_linear, backward_log, compute_norm_cache, forward, materialize_costs, BackwardSpace, CostMode, SdtwConfig,
    SeriesBatch, SoftDtw,
};

#[test]
fn forward_matches_naive_on_random_instances() {
    let mut r = rng(11);
    for case in 0..200 {
        let b = r.random_range(1..=4);
        let n = r.random_range(1..=32);
        let m = r.random_range(1..=32);
        let d = r.random_range(1..=8);
        let gamma = [0.1, 1.0, 10.0][case % 3];
        let x = random_batch(&mut r, b, n, d);
        let y = random_batch(&mut r, b, m, d);
        for mode in [CostMode::Unfused, CostMode::Fused] {
            let cfg = SdtwConfig::new(gamma).with_cost_mode(mode);
            let (loss, _) = forward(&x, &y, &cfg).unwrap();
            for k in 0..b {
                let want = naive_softdtw(&rows(&x, k), &rows(&y, k), gamma).loss;
                assert!(rel(loss[k], want) < 1e-10, "case {case}: {} vs {want}", loss[k]);
            }
        }
    }
}

#[test]
fn forward_table_matches_naive_table() {
    let mut r = rng(12);
    let x = random_batch(&mut r, 1, 9, 3);
    let y = random_batch(&mut r, 1, 13, 3);
    let (_, table) = forward(&x, &y, &SdtwConfig::new(0.5)).unwrap();
    let naive = naive_softdtw(&rows(&x, 0), &rows(&y, 0), 0.5);
    for i in 0..=9 {
        for j in 0..=13 {
            let (a, b) = (table.at(0, i, j), naive.r[i][j]);
            assert!(a == b || rel(a, b) < 1e-12, "R[{i}][{j}]: {a} vs {b}");
        }
    }
}

#[test]
fn both_backward_spaces_match_naive_alignment() {
    let mut r = rng(13);
    for case in 0..60 {
        let n = r.random_range(1..=20);
        let m = r.random_range(1..=20);
        let gamma = [0.1, 1.0, 10.0][case % 3];
        let x = random_batch(&mut r, 2, n, 2);
        let y = random_batch(&mut r, 2, m, 2);
        let c = compute_norm_cache(&x, &y).unwrap();
        let d = materialize_costs(&x, &y, &c).unwrap();
        let cfg = SdtwConfig::new(gamma);
        let log = backward_log(forward(&x, &y, &cfg).unwrap().1, &d, &cfg).unwrap();
        let lin = backward_linear(forward(&x, &y, &cfg).unwrap().1, &d, &cfg).unwrap();
        for b in 0..2 {
            let e = naive_softdtw(&rows(&x, b), &rows(&y, b), gamma).e;
            for i in 0..n {
                for j in 0..m {
                    let want = e[i][j];
                    assert!((log.at(b, i + 1, j + 1) - want).abs() < 1e-10, "log E[{i}][{j}]");
                    assert!((lin.at(b, i + 1, j + 1) - want).abs() < 1e-10, "linear E[{i}][{j}]");
                }
            }
        }
    }
}

#[test]
fn input_gradients_match_oracle_jacobian() {
    let mut r = rng(14);
    for case in 0..60 {
        let n = r.random_range(1..=16);
        let m = r.random_range(1..=16);
        let dim = r.random_range(1..=5);
        let gamma = [0.1, 1.0, 10.0][case % 3];
        let x = random_batch(&mut r, 3, n, dim);
        let y = random_batch(&mut r, 3, m, dim);
        for space in [BackwardSpace::Log, BackwardSpace::Linear] {
            let cfg = SdtwConfig::new(gamma).with_backward(space);
            let (_, g) = SoftDtw::new(cfg).unwrap().loss_and_grad(&x, &y).unwrap();
            for b in 0..3 {
                let (xr, yr) = (rows(&x, b), rows(&y, b));
                let e = naive_softdtw(&xr, &yr, gamma).e;
                let (gx, gy) = jacobian_gradients(&e, &xr, &yr);
                for i in 0..n {
                    for (a, w) in g.grad_x_at(b, i).iter().zip(&gx[i]) {
                        assert!(rel(*a, *w) < 1e-9, "grad_x {a} vs {w}");
                    }
                }
                for j in 0..m {
                    for (a, w) in g.grad_y_at(b, j).iter().zip(&gy[j]) {
                        assert!(rel(*a, *w) < 1e-9, "grad_y {a} vs {w}");
                    }
                }
            }
        }
    }
}

#[test]
fn soft_loss_is_sandwiched_by_hard_dtw() {
    let mut r = rng(15);
    for _ in 0..100 {
        let n = r.random_range(1..=24);
        let m = r.random_range(1..=24);
        let x = random_batch(&mut r, 1, n, 2);
        let y = random_batch(&mut r, 1, m, 2);
        let hard = hard_dtw(&rows(&x, 0), &rows(&y, 0)).distance;
        let cells = (n + m - 1) as f64;
        for gamma in [1e-3, 1e-2, 1e-1] {
            let soft = forward(&x, &y, &SdtwConfig::new(gamma)).unwrap().0[0];
            let slack = 1e-12 * (1.0 + hard.abs());
            assert!(soft <= hard + slack, "{soft} > {hard}");
            assert!(soft >= hard - gamma * 3f64.ln() * cells - slack);
        }
    }
}

#[test]
fn f32_tracks_f64() {
    let mut r = rng(16);
    let x = random_batch(&mut r, 2, 24, 4);
    let y = random_batch(&mut r, 2, 19, 4);
    let cfg = SdtwConfig::new(1.0);
    let (l64, g64) = SoftDtw::new(cfg).unwrap().loss_and_grad(&x, &y).unwrap();
    let (x32, y32): (SeriesBatch<f32>, SeriesBatch<f32>) = (x.cast(), y.cast());
    let (l32, g32) = SoftDtw::new(SdtwConfig::new(1.0f32))
        .unwrap()
        .loss_and_grad(&x32, &y32)
        .unwrap();
    for (a, b) in l32.iter().zip(&l64) {
        assert!(rel(f64::from(*a), *b) < 1e-4);
    }
    for (a, b) in g32.grad_x().iter().zip(g64.grad_x()) {
        assert!((f64::from(*a) - b).abs() < 1e-3 * b.abs().max(1.0));
    }
}
