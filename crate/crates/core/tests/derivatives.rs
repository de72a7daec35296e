mod common;

use common::{draw_sample, finite_difference_errors, worst_case, KINDS};
use pairdp::data::uniform_ball;
use pairdp::linalg::{norm2, sub};
use pairdp::rng::stream_rng;
use pairdp::{LossKind, PairwiseLoss, Sample};

#[test]
fn gradients_match_central_differences() {
    for (kind, d) in KINDS {
        let (worst, _) = finite_difference_errors(kind, d, 200, 101);
        assert!(worst < 1e-6, "{kind:?}: worst relative gradient error {worst:e}");
    }
}

#[test]
fn hessians_match_differences_of_gradients() {
    for (kind, d) in KINDS {
        let (_, worst) = finite_difference_errors(kind, d, 200, 202);
        assert!(worst < 1e-5, "{kind:?}: worst relative Hessian error {worst:e}");
    }
}

#[test]
fn worst_case_constants_bound_random_evaluations() {
    for (kind, d) in KINDS {
        let loss = worst_case(kind, 0.0);
        let c = *loss.constants();
        let p = loss.param_len(d);
        let mut rng = stream_rng(303, kind as u64);
        for _ in 0..10_000 {
            let theta = uniform_ball(&mut rng, p, 1.0);
            let theta2 = uniform_ball(&mut rng, p, 1.0);
            let (z, z2) = (draw_sample(&mut rng, kind, d), draw_sample(&mut rng, kind, d));
            let g = loss.grad(&theta, &z, &z2).unwrap();
            assert!(norm2(&g) <= c.g, "{kind:?}: ‖∇ℓ‖ = {} > G = {}", norm2(&g), c.g);
            let g2 = loss.grad(&theta2, &z, &z2).unwrap();
            assert!(norm2(&sub(&g, &g2)) <= c.l * norm2(&sub(&theta, &theta2)) * (1.0 + 1e-9));
            let v = loss.value(&theta, &z, &z2).unwrap();
            assert!(v >= 0.0 && v <= c.m_ell, "{kind:?}: ℓ = {v} outside [0, {}]", c.m_ell);
        }
    }
}

#[test]
fn published_constants_are_exceeded_at_the_boundary() {
    // a fully misranked pair at the edge of the unit ball
    let loss = PairwiseLoss::ranking(0.0).unwrap();
    let z = Sample::new(vec![1.0, 0.0], 1.0);
    let z2 = Sample::new(vec![-1.0, 0.0], -1.0);
    let g = loss.grad(&[-1.0, 0.0], &z, &z2).unwrap();
    assert!(norm2(&g) > loss.constants().g);
    assert!(norm2(&g) <= worst_case(LossKind::BipartiteRanking, 0.0).constants().g);

    let metric = PairwiseLoss::metric(0.0).unwrap();
    let a = Sample::new(vec![1.0, 0.0], 1.0);
    let b = Sample::new(vec![-1.0, 0.0], 1.0);
    let g = metric.grad(&[1.0, 0.0, 0.0, 0.0], &a, &b).unwrap();
    assert!(norm2(&g) > metric.constants().g);
}
