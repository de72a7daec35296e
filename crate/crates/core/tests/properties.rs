use pairdp::data::{SyntheticDistribution, uniform_ball};
use pairdp::linalg::{norm2, sub};
use pairdp::risk::PairSampler;
use pairdp::rng::stream_rng;
use pairdp::{
    calibrate_sigma_basic, calibrate_sigma_ma, empirical_risk_grad, gen_synthetic, load_dataset, pairwise_gradient_sensitivity,
    population_risk_mc, Bounds, ConstantSource, Dataset, Descriptor, LossKind, PairwiseLoss, PrivacyBudget, Sample,
    SyntheticKind,
};
use proptest::prelude::*;

fn sample_strategy(d: usize) -> impl Strategy<Value = Sample> {
    (prop::collection::vec(-1.0f64..1.0, d), -1.0f64..=1.0).prop_map(move |(x, y)| {
        let n = norm2(&x);
        let x = if n > 1.0 { x.iter().map(|v| v / n * (1.0 - 1e-12)).collect() } else { x };
        Sample::new(x, y)
    })
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..5, 2usize..25).prop_flat_map(|(d, n)| {
        prop::collection::vec(sample_strategy(d), n).prop_map(|s| Dataset::new(s, Bounds::UNIT).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(d in dataset_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        d.save(&path).unwrap();
        let back = load_dataset(&path, Descriptor { dim: d.dim(), bounds: Bounds::UNIT }).unwrap();
        prop_assert_eq!(back.samples(), d.samples());
    }

    #[test]
    fn replacing_one_record_moves_the_gradient_by_at_most_4g_over_n(
        d in dataset_strategy(),
        seed in any::<u64>(),
        lambda in 0.0f64..0.5,
    ) {
        let loss = PairwiseLoss::builtin(LossKind::BipartiteRanking, lambda, Bounds::UNIT, 1.0, ConstantSource::WorstCase).unwrap();
        let mut rng = stream_rng(seed, 0);
        let theta = uniform_ball(&mut rng, d.dim(), 1.0);
        let i = (seed % d.len() as u64) as usize;
        let fresh = Sample::new(uniform_ball(&mut rng, d.dim(), 1.0), if seed % 2 == 0 { 1.0 } else { -1.0 });
        let other = d.replaced(i, fresh).unwrap();
        let g1 = empirical_risk_grad(&loss, &theta, &d).unwrap();
        let g2 = empirical_risk_grad(&loss, &theta, &other).unwrap();
        let bound = pairwise_gradient_sensitivity(loss.constants().g, d.len()).unwrap();
        prop_assert!(norm2(&sub(&g1, &g2)) <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn basic_composition_never_beats_the_accountant(
        g in 0.1f64..10.0,
        t in 2usize..200,
        n in 2usize..100_000,
        eps in 0.01f64..1.9,
        log_delta in -12.0f64..-2.0,
    ) {
        let budget = PrivacyBudget::new(eps, 10f64.powf(log_delta)).unwrap();
        let ma = calibrate_sigma_ma(g, t, n, budget).unwrap().sigma;
        let basic = calibrate_sigma_basic(g, t, n, budget).unwrap().sigma;
        prop_assert!(basic >= ma, "basic {} < ma {}", basic, ma);
    }
}

#[test]
fn monte_carlo_estimates_agree_across_pair_counts() {
    let dist = SyntheticDistribution::new(SyntheticKind::Ranking, 4, 9).unwrap();
    let loss = PairwiseLoss::ranking(0.1).unwrap();
    let theta = gen_synthetic(SyntheticKind::Ranking, 2, 4, 3).unwrap().sample(0).x.clone();
    let small = population_risk_mc(&loss, &theta, PairSampler::Distribution(&dist), 100_000, 1).unwrap();
    let large = population_risk_mc(&loss, &theta, PairSampler::Distribution(&dist), 1_000_000, 2).unwrap();
    let combined = (small.std_err.powi(2) + large.std_err.powi(2)).sqrt();
    assert!(
        (small.mean - large.mean).abs() <= 3.0 * combined,
        "{} vs {} (se {combined})",
        small.mean,
        large.mean
    );
    assert!(large.std_err < small.std_err);
}
