//! Noise calibration for gradient perturbation and Gaussian noise sampling.
//!
//! Two calibrations are offered:
//!
//! * `MomentsAccountant`: the closed form `σ = 8G√(T·ln(1/δ)) / (nε)`, taken
//!   with equality (the smallest noise the guarantee allows).
//! * `BasicGaussian`: each iteration is a classical Gaussian mechanism on the
//!   pairwise gradient sensitivity `Δ₂ = 4G/n` with budget `(ε/T, δ/T)`, and
//!   the `T` iterations compose linearly. This gives
//!   `σ = Δ₂·√(2·ln(1.25T/δ))·T/ε`, valid while `ε/T < 1`.
//!
//! All logarithms are natural.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream_rng, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    #[serde(alias = "ma")]
    MomentsAccountant,
    #[serde(alias = "basic")]
    BasicGaussian,
    /// Noise switched off; carries no privacy guarantee.
    Disabled,
}

impl std::str::FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ma" | "moments_accountant" => Ok(Self::MomentsAccountant),
            "basic" | "basic_gaussian" => Ok(Self::BasicGaussian),
            other => Err(invalid(format!("unknown calibration method {other:?}"))),
        }
    }
}

/// Inputs a noise scale was calibrated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInputs {
    pub g: f64,
    pub iterations: usize,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
}

/// Per-iteration standard deviation of the Gaussian gradient noise, identical
/// across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub sigma: f64,
    pub method: CalibrationMethod,
    pub inputs: Option<CalibrationInputs>,
}

impl NoiseScale {
    pub fn disabled() -> Self {
        Self {
            sigma: 0.0,
            method: CalibrationMethod::Disabled,
            inputs: None,
        }
    }

    /// Whether `sigma` satisfies the moments-accountant bound for its inputs.
    pub fn satisfies_ma_bound(&self) -> bool {
        match self.inputs {
            Some(i) => {
                let budget = PrivacyBudget {
                    epsilon: i.epsilon,
                    delta: i.delta,
                };
                ma_sigma(i.g, i.iterations, i.n, budget) <= self.sigma
            }
            None => false,
        }
    }
}

fn check_common(g: f64, t: usize, n: usize) -> Result<()> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(invalid(format!("Lipschitz constant G must be positive, got {g}")));
    }
    if t < 1 {
        return Err(invalid("iteration count T must be at least 1"));
    }
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    Ok(())
}

fn ma_sigma(g: f64, t: usize, n: usize, budget: PrivacyBudget) -> f64 {
    8.0 * g * (t as f64 * (1.0 / budget.delta).ln()).sqrt() / (n as f64 * budget.epsilon)
}

/// `σ = 8G√(T ln(1/δ)) / (nε)`
pub fn calibrate_sigma_ma(g: f64, iterations: usize, n: usize, budget: PrivacyBudget) -> Result<NoiseScale> {
    check_common(g, iterations, n)?;
    Ok(NoiseScale {
        sigma: ma_sigma(g, iterations, n, budget),
        method: CalibrationMethod::MomentsAccountant,
        inputs: Some(CalibrationInputs {
            g,
            iterations,
            n,
            epsilon: budget.epsilon,
            delta: budget.delta,
        }),
    })
}

/// `σ = (4G/n)·√(2 ln(1.25T/δ))·T/ε`; requires `ε/T < 1`.
pub fn calibrate_sigma_basic(g: f64, iterations: usize, n: usize, budget: PrivacyBudget) -> Result<NoiseScale> {
    check_common(g, iterations, n)?;
    let t = iterations as f64;
    let step_eps = budget.epsilon / t;
    if step_eps >= 1.0 {
        return Err(Error::CalibrationRegime(format!(
            "per-iteration epsilon ε/T = {step_eps} must be < 1 for the classical Gaussian mechanism"
        )));
    }
    let sensitivity = pairwise_gradient_sensitivity(g, n)?;
    let sigma = sensitivity * (2.0 * (1.25 * t / budget.delta).ln()).sqrt() / step_eps;
    Ok(NoiseScale {
        sigma,
        method: CalibrationMethod::BasicGaussian,
        inputs: Some(CalibrationInputs {
            g,
            iterations,
            n,
            epsilon: budget.epsilon,
            delta: budget.delta,
        }),
    })
}

pub fn calibrate(method: CalibrationMethod, g: f64, iterations: usize, n: usize, budget: PrivacyBudget) -> Result<NoiseScale> {
    match method {
        CalibrationMethod::MomentsAccountant => calibrate_sigma_ma(g, iterations, n, budget),
        CalibrationMethod::BasicGaussian => calibrate_sigma_basic(g, iterations, n, budget),
        CalibrationMethod::Disabled => Ok(NoiseScale::disabled()),
    }
}

/// ℓ₂-sensitivity of the averaged pairwise gradient under replacement of one
/// sample: `2(n−1)` of the `n(n−1)` ordered terms change, each by at most
/// `2G`, so the average moves by at most `4G/n`.
pub fn pairwise_gradient_sensitivity(g: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    if !(g >= 0.0) {
        return Err(invalid(format!("G must be non-negative, got {g}")));
    }
    Ok(4.0 * g / n as f64)
}

/// The noise stream of one training run. Counts every vector drawn.
#[derive(Debug, Clone)]
pub struct NoiseRng {
    rng: ChaCha8Rng,
    vectors: usize,
    coordinates: usize,
}

impl NoiseRng {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: stream_rng(seed, streams::NOISE),
            vectors: 0,
            coordinates: 0,
        }
    }

    pub fn vectors_drawn(&self) -> usize {
        self.vectors
    }

    pub fn coordinates_drawn(&self) -> usize {
        self.coordinates
    }
}

/// `p` i.i.d. `N(0, σ²)` draws. The stream advances by `p` standard normals
/// even when `σ = 0`, so noise sequences stay aligned across noise levels.
pub fn sample_noise(sigma: f64, p: usize, rng: &mut NoiseRng) -> Vec<f64> {
    rng.vectors += 1;
    rng.coordinates += p;
    (0..p)
        .map(|_| {
            let z: f64 = rng.rng.sample(StandardNormal);
            if sigma == 0.0 {
                0.0
            } else {
                sigma * z
            }
        })
        .collect()
}
