#![allow(dead_code)]

use pairdp::data::uniform_ball;
use pairdp::linalg::{norm2, sub};
use pairdp::rng::stream_rng;
use pairdp::{Bounds, ConstantSource, LossKind, PairwiseLoss, Sample};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn draw_sample(rng: &mut ChaCha8Rng, kind: LossKind, d: usize) -> Sample {
    let x = uniform_ball(rng, d, 1.0);
    let y = match kind {
        LossKind::MetricLearning => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        _ => rng.random_range(-1.0..=1.0),
    };
    Sample::new(x, y)
}

pub fn worst_case(kind: LossKind, lambda: f64) -> PairwiseLoss {
    PairwiseLoss::builtin(kind, lambda, Bounds::UNIT, 1.0, ConstantSource::WorstCase).unwrap()
}

/// Feature dims per loss; metric parameters are d×d.
pub const KINDS: [(LossKind, usize); 2] = [(LossKind::BipartiteRanking, 4), (LossKind::MetricLearning, 3)];

// relative error, floored so near-zero gradients are compared absolutely
fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(1e-3)
}

/// Worst relative gradient and Hessian errors against central differences
/// over `cases` random points, alternating λ between 0 and 0.1.
pub fn finite_difference_errors(kind: LossKind, d: usize, cases: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, kind as u64);
    let (mut grad_err, mut hess_err) = (0.0f64, 0.0f64);
    for case in 0..cases {
        let loss = worst_case(kind, if case % 2 == 0 { 0.0 } else { 0.1 });
        let p = loss.param_len(d);
        let theta = uniform_ball(&mut rng, p, 1.0);
        let (z, z2) = (draw_sample(&mut rng, kind, d), draw_sample(&mut rng, kind, d));
        let shifted = |k: usize, h: f64| {
            let mut t = theta.clone();
            t[k] += h;
            t
        };

        let g = loss.grad(&theta, &z, &z2).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..p)
            .map(|k| {
                (loss.value(&shifted(k, h), &z, &z2).unwrap() - loss.value(&shifted(k, -h), &z, &z2).unwrap()) / (2.0 * h)
            })
            .collect();
        grad_err = grad_err.max(rel(norm2(&sub(&fd, &g)), norm2(&g)));

        let hess = loss.hessian(&theta, &z, &z2).unwrap();
        let h = 1e-5;
        let mut err = 0.0;
        for k in 0..p {
            let ga = loss.grad(&shifted(k, h), &z, &z2).unwrap();
            let gb = loss.grad(&shifted(k, -h), &z, &z2).unwrap();
            for r in 0..p {
                err += ((ga[r] - gb[r]) / (2.0 * h) - hess[(r, k)]).powi(2);
            }
        }
        let scale = hess.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        hess_err = hess_err.max(rel(err.sqrt(), scale));
    }
    (grad_err, hess_err)
}
