//! Noisy full-batch gradient descent over the pairwise empirical risk, and
//! the noiseless solver used as the exact-training oracle.

use serde::{Deserialize, Serialize};

use crate::data::{uniform_ball, Dataset, Layout, ModelParams};
use crate::error::{invalid, Error, Result};
use crate::linalg::norm2;
use crate::losses::PairwiseLoss;
use crate::privacy::{sample_noise, NoiseRng, NoiseScale};
use crate::risk::empirical_risk_and_grad;
use crate::rng::{stream_rng, streams};

/// Starting point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform in the ball of radius `min(1, r)/2`, drawn from the run seed.
    Random,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Step size; `None` means `1/L` from the loss constants.
    pub eta: Option<f64>,
    pub sigma: NoiseScale,
    pub init: Init,
    /// Project onto the ball of this radius after every step.
    pub project: Option<f64>,
    pub record_trajectory: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(iterations: usize, sigma: NoiseScale, seed: u64) -> Self {
        Self {
            iterations,
            eta: None,
            sigma,
            init: Init::Random,
            project: None,
            record_trajectory: false,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(invalid("iteration count T must be at least 1"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(invalid(format!("step size must be positive, got {eta}")));
            }
        }
        if !(self.sigma.sigma >= 0.0) || !self.sigma.sigma.is_finite() {
            return Err(invalid(format!("sigma must be finite and ≥ 0, got {}", self.sigma.sigma)));
        }
        if let Some(r) = self.project {
            if !(r > 0.0) {
                return Err(invalid(format!("projection radius must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub theta_priv: ModelParams,
    pub theta0: Vec<f64>,
    pub eta: f64,
    /// `L(θ₀; D)`
    pub initial_risk: f64,
    /// `L(θ_t; D)` for `t = 1..=T`.
    pub risk_trace: Vec<f64>,
    /// `‖∇L(θ_{t−1}; D)‖₂` for `t = 1..=T` (noise-free gradient).
    pub grad_norm_trace: Vec<f64>,
    /// `θ_1..θ_T` when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
    pub noise_seed: u64,
    pub noise_vectors: usize,
    pub config: TrainConfig,
}

/// `θ − η(g + b)`
pub fn gd_step(theta: &[f64], grad: &[f64], noise: &[f64], eta: f64) -> Result<Vec<f64>> {
    if grad.len() != theta.len() || noise.len() != theta.len() {
        return Err(invalid(format!(
            "length mismatch: theta {}, grad {}, noise {}",
            theta.len(),
            grad.len(),
            noise.len()
        )));
    }
    Ok(theta
        .iter()
        .zip(grad.iter().zip(noise))
        .map(|(t, (g, b))| t - eta * (g + b))
        .collect())
}

/// Euclidean projection onto the ball of `radius`.
pub fn project(theta: &[f64], radius: f64) -> Vec<f64> {
    let norm = norm2(theta);
    if norm <= radius {
        theta.to_vec()
    } else {
        let s = radius / norm;
        theta.iter().map(|t| t * s).collect()
    }
}

fn initial_point(layout: Layout, init: &Init, project_radius: Option<f64>, seed: u64) -> Result<Vec<f64>> {
    match init {
        Init::Given(v) => {
            if v.len() != layout.len() {
                return Err(Error::Layout {
                    expected: layout.len(),
                    got: v.len(),
                });
            }
            Ok(v.clone())
        }
        Init::Random => {
            let radius = project_radius.unwrap_or(1.0).min(1.0) / 2.0;
            let mut rng = stream_rng(seed, streams::INIT);
            Ok(uniform_ball(&mut rng, layout.len(), radius))
        }
    }
}

/// Gradient perturbation: `θ_t = θ_{t−1} − η(∇L(θ_{t−1}; D) + b_t)` with
/// fresh `b_t ∼ N(0, σ²I)` per iteration; returns `θ_T`. The noise scale is
/// taken as given.
pub fn dp_pairwise_gd(loss: &PairwiseLoss, d: &Dataset, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let layout = loss.layout(d.dim());
    let p = layout.len();
    let eta = config.eta.unwrap_or(1.0 / loss.constants().l);
    let mut theta = initial_point(layout, &config.init, config.project, config.seed)?;
    let theta0 = theta.clone();
    let mut noise_rng = NoiseRng::new(config.seed);

    let (initial_risk, mut grad) = empirical_risk_and_grad(loss, &theta, d)?;
    let mut risk_trace = Vec::with_capacity(config.iterations);
    let mut grad_norm_trace = Vec::with_capacity(config.iterations);
    let mut trajectory = config.record_trajectory.then(|| Vec::with_capacity(config.iterations));

    for t in 1..=config.iterations {
        let noise = sample_noise(config.sigma.sigma, p, &mut noise_rng);
        grad_norm_trace.push(norm2(&grad));
        theta = gd_step(&theta, &grad, &noise, eta)?;
        if let Some(r) = config.project {
            theta = project(&theta, r);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: t });
        }
        let (risk, next) = empirical_risk_and_grad(loss, &theta, d)?;
        if !risk.is_finite() {
            return Err(Error::Divergence { iteration: t });
        }
        risk_trace.push(risk);
        grad = next;
        if let Some(traj) = trajectory.as_mut() {
            traj.push(theta.clone());
        }
    }

    Ok(TrainResult {
        theta_priv: ModelParams::new(theta, layout)?,
        theta0,
        eta,
        initial_risk,
        risk_trace,
        grad_norm_trace,
        trajectory,
        noise_seed: config.seed,
        noise_vectors: noise_rng.vectors_drawn(),
        config: config.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// `None` means `1/L`.
    pub eta: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The loss declares `mu > 0`, so gradient descent converges linearly.
    pub pl_guaranteed: bool,
}

impl Solution {
    /// Turns a non-converged result into an error.
    pub fn require_converged(self, tol: f64) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                grad_norm: self.grad_norm,
                iterations: self.iterations,
                tol,
            })
        }
    }
}

/// Noiseless gradient descent on any objective returning `(value, gradient)`.
/// The step is halved whenever a step would increase the objective, which
/// never happens when the step is below `1/L` for the true smoothness `L`.
pub(crate) fn minimize_with<F>(mut eval: F, theta0: &[f64], eta: f64, cfg: &SolverConfig) -> Result<(Vec<f64>, f64, f64, usize, bool)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(cfg.tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {}", cfg.tol)));
    }
    let mut theta = theta0.to_vec();
    let (mut value, mut grad) = eval(&theta)?;
    let mut step = eta;
    for it in 0..cfg.max_iter {
        let gn = norm2(&grad);
        if gn <= cfg.tol {
            return Ok((theta, value, gn, it, true));
        }
        loop {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            if cand.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { iteration: it + 1 });
            }
            let (v, g) = eval(&cand)?;
            // changes below rounding level are not increases
            let slack = 16.0 * f64::EPSILON * value.abs().max(1.0);
            if v <= value + slack || step < eta * 1e-12 {
                theta = cand;
                value = v;
                grad = g;
                break;
            }
            step *= 0.5;
        }
    }
    let gn = norm2(&grad);
    Ok((theta, value, gn, cfg.max_iter, gn <= cfg.tol))
}

/// Non-private minimizer `θ* = argmin L(θ; D)` by gradient descent with step
/// `1/L`, stopped at `‖∇L‖₂ ≤ tol`. Not reaching the tolerance is reported
/// through `converged = false`, not as an error.
pub fn exact_minimize(loss: &PairwiseLoss, d: &Dataset, cfg: &SolverConfig, theta0: &[f64]) -> Result<Solution> {
    let expected = loss.param_len(d.dim());
    if theta0.len() != expected {
        return Err(Error::Layout {
            expected,
            got: theta0.len(),
        });
    }
    let eta = cfg.eta.unwrap_or(1.0 / loss.constants().l);
    let (theta, value, grad_norm, iterations, converged) =
        minimize_with(|th| empirical_risk_and_grad(loss, th, d), theta0, eta, cfg)?;
    Ok(Solution {
        theta,
        value,
        grad_norm,
        iterations,
        converged,
        pl_guaranteed: loss.constants().mu > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind};
    use crate::privacy::{calibrate_sigma_ma, PrivacyBudget};
    use crate::risk::{empirical_risk, empirical_risk_grad};

    #[test]
    fn gd_step_identities() {
        let th = [0.3, -0.2];
        assert_eq!(gd_step(&th, &[0.0, 0.0], &[0.0, 0.0], 0.7).unwrap(), th.to_vec());
        assert_eq!(gd_step(&[0.0, 0.0], &[1.0, 2.0], &[0.5, -1.0], 1.0).unwrap(), vec![-1.5, -1.0]);
        let g = [0.4, 0.1];
        let b = [0.25, -0.5];
        let with = gd_step(&th, &g, &b, 0.5).unwrap();
        let without = gd_step(&th, &g, &[0.0, 0.0], 0.5).unwrap();
        for k in 0..2 {
            assert!((with[k] - without[k] + 0.5 * b[k]).abs() < 1e-16);
        }
        assert!(gd_step(&th, &[0.0], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn projection() {
        assert_eq!(project(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        let p = project(&[3.0, 4.0], 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project(&p, 1.0), p);
    }

    #[test]
    fn single_unit_step_from_origin() {
        let loss = PairwiseLoss::ranking(0.1).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 12, 3, 1).unwrap();
        let mut cfg = TrainConfig::new(1, NoiseScale::disabled(), 0);
        cfg.eta = Some(1.0);
        cfg.init = Init::Given(vec![0.0; 3]);
        let r = dp_pairwise_gd(&loss, &d, &cfg).unwrap();
        let g = empirical_risk_grad(&loss, &[0.0; 3], &d).unwrap();
        for (a, b) in r.theta_priv.theta.iter().zip(g) {
            assert!((a + b).abs() < 1e-15);
        }
        assert_eq!(r.noise_vectors, 1);
    }

    #[test]
    fn noiseless_trace_is_non_increasing() {
        let loss = PairwiseLoss::ranking(0.5).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 25, 3, 8).unwrap();
        let r = dp_pairwise_gd(&loss, &d, &TrainConfig::new(40, NoiseScale::disabled(), 2)).unwrap();
        let mut prev = r.initial_risk;
        for v in &r.risk_trace {
            assert!(*v <= prev + 1e-15, "{v} > {prev}");
            prev = *v;
        }
        assert_eq!(r.risk_trace.len(), 40);
        assert_eq!(r.grad_norm_trace.len(), 40);
    }

    #[test]
    fn training_is_reproducible_and_counts_noise() {
        let loss = PairwiseLoss::ranking(0.1).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 30, 4, 8).unwrap();
        let sigma = calibrate_sigma_ma(2.2, 6, 30, PrivacyBudget::new(1.0, 1e-5).unwrap()).unwrap();
        let mut cfg = TrainConfig::new(6, sigma, 42);
        cfg.record_trajectory = true;
        let a = dp_pairwise_gd(&loss, &d, &cfg).unwrap();
        let b = dp_pairwise_gd(&loss, &d, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.noise_vectors, 6);
        let traj = a.trajectory.as_ref().unwrap();
        assert_eq!(traj.len(), 6);
        assert_eq!(traj.last().unwrap(), &a.theta_priv.theta);
    }

    #[test]
    fn random_init_lies_in_half_ball() {
        let loss = PairwiseLoss::ranking(0.0).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 5, 4, 8).unwrap();
        for seed in 0..20 {
            let r = dp_pairwise_gd(&loss, &d, &TrainConfig::new(1, NoiseScale::disabled(), seed)).unwrap();
            assert!(norm2(&r.theta0) <= 0.5);
        }
    }

    #[test]
    fn projected_iterates_stay_in_ball() {
        let loss = PairwiseLoss::ranking(0.0).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 10, 3, 8).unwrap();
        let mut sigma = NoiseScale::disabled();
        sigma.sigma = 5.0;
        let mut cfg = TrainConfig::new(20, sigma, 1);
        cfg.project = Some(1.0);
        cfg.record_trajectory = true;
        let r = dp_pairwise_gd(&loss, &d, &cfg).unwrap();
        assert!(r.trajectory.unwrap().iter().all(|t| norm2(t) <= 1.0 + 1e-15));
    }

    #[test]
    fn divergence_is_reported() {
        let loss = PairwiseLoss::ranking(0.0).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 5, 2, 8).unwrap();
        let mut sigma = NoiseScale::disabled();
        sigma.sigma = 1e300;
        let mut cfg = TrainConfig::new(5, sigma, 1);
        cfg.eta = Some(1e10);
        assert!(matches!(dp_pairwise_gd(&loss, &d, &cfg), Err(Error::Divergence { iteration: 1 })));
    }

    #[test]
    fn exact_minimize_reaches_tolerance() {
        let loss = PairwiseLoss::ranking(0.1).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 30, 3, 3).unwrap();
        let cfg = SolverConfig {
            tol: 1e-10,
            ..Default::default()
        };
        let s = exact_minimize(&loss, &d, &cfg, &[0.0; 3]).unwrap();
        assert!(s.converged && s.pl_guaranteed, "{s:?}");
        assert!(s.grad_norm <= 1e-10);
        assert!((s.value - empirical_risk(&loss, &s.theta, &d).unwrap()).abs() < 1e-15);

        let s2 = exact_minimize(&loss, &d, &cfg, &[0.5, -0.5, 0.5]).unwrap();
        let gap = crate::linalg::dist2(&s.theta, &s2.theta);
        assert!(gap <= 10.0 * cfg.tol / loss.constants().mu, "minimizers differ by {gap}");
    }

    #[test]
    fn non_convergence_is_a_result() {
        let loss = PairwiseLoss::ranking(0.1).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 30, 3, 3).unwrap();
        let cfg = SolverConfig {
            tol: 1e-12,
            max_iter: 2,
            eta: None,
        };
        let s = exact_minimize(&loss, &d, &cfg, &[0.0; 3]).unwrap();
        assert!(!s.converged);
        assert!(matches!(s.require_converged(1e-12), Err(Error::NotConverged { .. })));
    }
}
