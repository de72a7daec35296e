//! Browser bindings for three interactive views: noise scale against the
//! iteration count, a private training run next to its noiseless twin, and
//! influence predictions against exact leave-one-out retraining.
//!
//! Each export returns a JSON string; the plain functions underneath are
//! usable (and tested) natively.

use pairdp::linalg::{dist2, norm2};
use pairdp::privacy::{calibrate_sigma_basic, calibrate_sigma_ma, NoiseScale};
use pairdp::stability::{influence_rhs, retrain_loo_from, Damping, HessianFactor};
use pairdp::{
    dp_pairwise_gd, empirical_risk, exact_minimize, gen_synthetic, ConstantSource, LossKind, PairwiseLoss, PrivacyBudget,
    Result, SolverConfig, SyntheticKind, TrainConfig,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_T: usize = 500;
const MAX_TRAIN_N: usize = 600;
const MAX_PROBE_N: usize = 120;

#[derive(Debug, Serialize)]
pub struct CalibrationCurve {
    pub iterations: Vec<usize>,
    pub sigma_ma: Vec<f64>,
    /// `None` where the basic composition needs `ε/T < 1` and it fails.
    pub sigma_basic: Vec<Option<f64>>,
}

pub fn calibration_curve(g: f64, n: usize, eps: f64, delta: f64, t_max: usize) -> Result<CalibrationCurve> {
    let budget = PrivacyBudget::new(eps, delta)?;
    let t_max = t_max.clamp(1, MAX_T);
    let mut curve = CalibrationCurve {
        iterations: Vec::with_capacity(t_max),
        sigma_ma: Vec::with_capacity(t_max),
        sigma_basic: Vec::with_capacity(t_max),
    };
    for t in 1..=t_max {
        curve.iterations.push(t);
        curve.sigma_ma.push(calibrate_sigma_ma(g, t, n, budget)?.sigma);
        curve.sigma_basic.push(calibrate_sigma_basic(g, t, n, budget).ok().map(|s| s.sigma));
    }
    Ok(curve)
}

#[derive(Debug, Serialize)]
pub struct TrainingTrace {
    pub sigma: f64,
    pub eta: f64,
    pub empirical_min: f64,
    /// `L(θ_t)` for `t = 0..=T`, private run.
    pub private: Vec<f64>,
    /// Same start, same step, no noise.
    pub noiseless: Vec<f64>,
    pub excess_empirical_risk: f64,
}

fn kinds(kind: &str) -> Result<(LossKind, SyntheticKind)> {
    let loss: LossKind = kind.parse()?;
    let data = match loss {
        LossKind::MetricLearning => SyntheticKind::Metric,
        _ => SyntheticKind::Ranking,
    };
    Ok((loss, data))
}

#[allow(clippy::too_many_arguments)]
pub fn training_trace(
    kind: &str,
    n: usize,
    d: usize,
    lambda: f64,
    eps: f64,
    delta: f64,
    iterations: usize,
    seed: u64,
) -> Result<TrainingTrace> {
    let (loss_kind, data_kind) = kinds(kind)?;
    let data = gen_synthetic(data_kind, n.clamp(2, MAX_TRAIN_N), d.max(1), seed)?;
    let loss = PairwiseLoss::builtin(loss_kind, lambda, data.bounds(), 1.0, ConstantSource::Published)?;
    let t = iterations.clamp(1, MAX_T);
    let noise = calibrate_sigma_ma(loss.constants().g, t, data.len(), PrivacyBudget::new(eps, delta)?)?;
    let private = dp_pairwise_gd(&loss, &data, &TrainConfig::new(t, noise, seed))?;
    let quiet = dp_pairwise_gd(&loss, &data, &TrainConfig::new(t, NoiseScale::disabled(), seed))?;
    let p = loss.param_len(data.dim());
    let best = exact_minimize(&loss, &data, &SolverConfig::default(), &vec![0.0; p])?;
    let with_start = |r: &pairdp::TrainResult| std::iter::once(r.initial_risk).chain(r.risk_trace.iter().copied()).collect();
    Ok(TrainingTrace {
        sigma: noise.sigma,
        eta: private.eta,
        empirical_min: best.value,
        private: with_start(&private),
        noiseless: with_start(&quiet),
        excess_empirical_risk: empirical_risk(&loss, private.theta_priv.as_slice(), &data)? - best.value,
    })
}

#[derive(Debug, Serialize)]
pub struct InfluencePoint {
    pub index: usize,
    /// `‖A*(D^{-i}) − A*(D)‖₂` from retraining.
    pub exact_shift: f64,
    /// Norm of the influence prediction.
    pub predicted_shift: f64,
    pub relative_error: f64,
}

#[derive(Debug, Serialize)]
pub struct InfluenceProbe {
    pub damping: f64,
    pub points: Vec<InfluencePoint>,
}

pub fn influence_probe(n: usize, d: usize, lambda: f64, seed: u64) -> Result<InfluenceProbe> {
    let data = gen_synthetic(SyntheticKind::Ranking, n.clamp(3, MAX_PROBE_N), d.max(1), seed)?;
    let loss = PairwiseLoss::builtin(LossKind::BipartiteRanking, lambda, data.bounds(), 1.0, ConstantSource::Published)?;
    let solver = SolverConfig::default();
    let p = loss.param_len(data.dim());
    let full = exact_minimize(&loss, &data, &solver, &vec![0.0; p])?.require_converged(solver.tol)?;
    let factor = HessianFactor::new(&loss, &full.theta, &data, Damping::Ladder)?;
    let mut points = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let loo = retrain_loo_from(&loss, &data, i, &solver, &full.theta)?;
        let exact = dist2(loo.as_slice(), &full.theta);
        let pred = factor.solve(&influence_rhs(&loss, &full.theta, &data, i)?);
        let predicted_theta: Vec<f64> = full.theta.iter().zip(&pred.delta_theta).map(|(a, b)| a + b).collect();
        let err = dist2(&predicted_theta, loo.as_slice());
        points.push(InfluencePoint {
            index: i,
            exact_shift: exact,
            predicted_shift: norm2(&pred.delta_theta),
            relative_error: if exact > 0.0 { err / exact } else { 0.0 },
        });
    }
    Ok(InfluenceProbe {
        damping: factor.gamma(),
        points,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    let v = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = calibrationCurve)]
pub fn calibration_curve_js(g: f64, n: usize, eps: f64, delta: f64, t_max: usize) -> std::result::Result<String, JsValue> {
    to_js(calibration_curve(g, n, eps, delta, t_max))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = trainingTrace)]
pub fn training_trace_js(
    kind: &str,
    n: usize,
    d: usize,
    lambda: f64,
    eps: f64,
    delta: f64,
    iterations: usize,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(training_trace(kind, n, d, lambda, eps, delta, iterations, seed as u64))
}

#[wasm_bindgen(js_name = influenceProbe)]
pub fn influence_probe_js(n: usize, d: usize, lambda: f64, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(influence_probe(n, d, lambda, seed as u64))
}
