mod common;

use common::{random_batch, rng};
use rand::Rng;
use sdtw_core::oracle::fd_gradient;
use sdtw_core::{BackwardSpace, CostMode, SdtwConfig, SeriesBatch, SoftDtw};

fn loss_of(cfg: SdtwConfig<f64>, x: &SeriesBatch<f64>, y: &SeriesBatch<f64>) -> f64 {
    SoftDtw::new(cfg).unwrap().loss(x, y).unwrap().iter().sum()
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn input_gradients_match_central_differences() {
    let mut r = rng(21);
    let mut worst = 0.0f64;
    for gamma in [0.1, 1.0, 10.0] {
        for dim in [1, 3] {
            for _ in 0..8 {
                let n = r.random_range(1..=6);
                let m = r.random_range(1..=6);
                let x = random_batch(&mut r, 2, n, dim);
                let y = random_batch(&mut r, 2, m, dim);
                for mode in [CostMode::Unfused, CostMode::Fused] {
                    let cfg = SdtwConfig::new(gamma).with_cost_mode(mode);
                    let (_, g) = SoftDtw::new(cfg).unwrap().loss_and_grad(&x, &y).unwrap();
                    let fx = fd_gradient(
                        |v| loss_of(cfg, &SeriesBatch::new(v.to_vec(), 2, n, dim).unwrap(), &y),
                        x.as_slice(),
                        1e-6,
                    )
                    .unwrap();
                    let fy = fd_gradient(
                        |v| loss_of(cfg, &x, &SeriesBatch::new(v.to_vec(), 2, m, dim).unwrap()),
                        y.as_slice(),
                        1e-6,
                    )
                    .unwrap();
                    worst = worst
                        .max(max_rel_err(g.grad_x(), &fx))
                        .max(max_rel_err(g.grad_y(), &fy));
                }
            }
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn banded_gradients_match_central_differences() {
    let mut r = rng(22);
    for bw in [1, 2] {
        let x = random_batch(&mut r, 1, 6, 2);
        let y = random_batch(&mut r, 1, 5, 2);
        let cfg = SdtwConfig::new(0.5).with_bandwidth(bw);
        let (_, g) = SoftDtw::new(cfg).unwrap().loss_and_grad(&x, &y).unwrap();
        let fx = fd_gradient(
            |v| loss_of(cfg, &SeriesBatch::new(v.to_vec(), 1, 6, 2).unwrap(), &y),
            x.as_slice(),
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(g.grad_x(), &fx) < 1e-5);
    }
}

#[test]
fn fused_and_unfused_gradients_agree() {
    let mut r = rng(23);
    for gamma in [0.1, 1.0, 10.0] {
        for dim in [1, 3] {
            let x = random_batch(&mut r, 3, 6, dim);
            let y = random_batch(&mut r, 3, 5, dim);
            let run = |mode| {
                let cfg = SdtwConfig::new(gamma).with_cost_mode(mode);
                SoftDtw::new(cfg).unwrap().loss_and_grad(&x, &y).unwrap()
            };
            let (lu, gu) = run(CostMode::Unfused);
            let (lf, gf) = run(CostMode::Fused);
            assert_eq!(lu, lf);
            assert_eq!(gu.grad_x(), gf.grad_x());
            assert_eq!(gu.grad_y(), gf.grad_y());
        }
    }
}

#[test]
fn log_and_linear_gradients_agree_when_both_are_stable() {
    let mut r = rng(24);
    let x = random_batch(&mut r, 2, 30, 3);
    let y = random_batch(&mut r, 2, 27, 3);
    let grads = |space| {
        let cfg = SdtwConfig::new(0.3).with_backward(space);
        SoftDtw::new(cfg).unwrap().loss_and_grad(&x, &y).unwrap().1
    };
    let (a, b) = (grads(BackwardSpace::Log), grads(BackwardSpace::Linear));
    assert!(max_rel_err(a.grad_x(), b.grad_x()) < 1e-10);
    assert!(max_rel_err(a.grad_y(), b.grad_y()) < 1e-10);
}

#[test]
fn length_one_gradient_is_analytic() {
    let x = SeriesBatch::new(vec![0.3, -1.2], 1, 1, 2).unwrap();
    let y = SeriesBatch::new(vec![1.0, 0.5], 1, 1, 2).unwrap();
    let (loss, g) = SoftDtw::new(SdtwConfig::new(1.0))
        .unwrap()
        .loss_and_grad(&x, &y)
        .unwrap();
    assert!((loss[0] - (0.7f64.powi(2) + 1.7f64.powi(2))).abs() < 1e-15);
    let want = [2.0 * (0.3 - 1.0), 2.0 * (-1.2 - 0.5)];
    for (a, w) in g.grad_x().iter().zip(want) {
        assert!((a - w).abs() < 1e-15);
    }
}
