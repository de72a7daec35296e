//! Differentially private pairwise learning by gradient perturbation.
//!
//! The crate covers the full pipeline: pairwise losses with analytic
//! derivatives ([`losses`]), the pairwise empirical and population risks
//! ([`risk`]), noise calibration ([`privacy`]), noisy full-batch gradient
//! descent ([`optimizer`]), influence functions and stability statistics
//! ([`stability`]), and an experiment driver producing JSON reports
//! ([`harness`]).

pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod optimizer;
pub mod privacy;
pub mod risk;
pub mod rng;
pub mod stability;

pub use data::{gen_synthetic, load_dataset, pair_stream, Bounds, Dataset, Descriptor, Layout, ModelParams, Sample, SyntheticKind};
pub use error::{Error, Result};
pub use losses::{registered_constants, ConstantSource, LossConstants, LossKind, PairwiseLoss};
pub use optimizer::{dp_pairwise_gd, exact_minimize, gd_step, project, Init, SolverConfig, TrainConfig, TrainResult};
pub use privacy::{calibrate_sigma_basic, calibrate_sigma_ma, pairwise_gradient_sensitivity, sample_noise, NoiseScale, PrivacyBudget};
pub use risk::{empirical_risk, empirical_risk_grad, excess_population_risk, pl_check, population_risk_mc};
pub use stability::{beta_statistics, elastic_beta, estimate_uas, influence_loo, retrain_loo, StabilityMethod, StabilityProbe, StabilityReport};
pub use harness::{run_experiment, scaling_fit, stability_experiment, ExperimentConfig, ExperimentReport};
