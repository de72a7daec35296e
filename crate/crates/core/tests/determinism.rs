use pairdp::harness::{to_json, StabilityConfig};
use pairdp::{run_experiment, stability_experiment, ExperimentConfig};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn small_experiment() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{"n_grid": [30, 60], "eps_grid": [0.5, 2.0], "dim_grid": [3], "seeds": 3,
            "master_seed": 42, "reference_multiplier": 4, "reference_pairs": 5000, "mc_pairs": 4000}"#,
    )
    .unwrap()
}

#[test]
fn experiment_reports_do_not_depend_on_thread_count() {
    let cfg = small_experiment();
    let one = in_pool(1, || to_json(&run_experiment(&cfg).unwrap()).unwrap());
    let many = in_pool(8, || to_json(&run_experiment(&cfg).unwrap()).unwrap());
    assert_eq!(one, many);
    let again = in_pool(8, || to_json(&run_experiment(&cfg).unwrap()).unwrap());
    assert_eq!(many, again);
}

#[test]
fn stability_sweeps_do_not_depend_on_thread_count() {
    let cfg: StabilityConfig =
        serde_json::from_str(r#"{"n_grid": [12, 16], "dim": 3, "seeds": 2, "pairs": 40, "uas_replacements": 3}"#).unwrap();
    let one = in_pool(1, || to_json(&stability_experiment(&cfg).unwrap()).unwrap());
    let many = in_pool(8, || to_json(&stability_experiment(&cfg).unwrap()).unwrap());
    assert_eq!(one, many);
}
