//! Experiment driver: calibrated private training over `(n, ε, p, seed)`
//! grids, excess-risk aggregation, log-log slope fits, stability sweeps and
//! JSON reports.
//!
//! Every random quantity is drawn from a stream derived from the master seed
//! and the cell coordinates, so reports do not depend on the number of worker
//! threads or on evaluation order.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{Bounds, Dataset, SyntheticDistribution, SyntheticKind};
use crate::error::{invalid, Error, Result};
use crate::losses::{ConstantSource, LossKind, PairwiseLoss};
use crate::optimizer::{dp_pairwise_gd, exact_minimize, SolverConfig, TrainConfig};
use crate::privacy::{calibrate, CalibrationMethod, NoiseScale, PrivacyBudget};
use crate::risk::{
    empirical_risk, excess_population_risk, par_map, reference_minimizer, ExcessRiskInputs, PairSampler, PairSet,
    ReferenceModel,
};
use crate::rng::{derive_seed, stream_rng, streams};
use crate::stability::{
    beta_statistics, estimate_uas, influence_errors, ReplacementSource, StabilityMethod, StabilityProbe,
    StabilityReport, Trainer,
};

pub const REPORT_VERSION: &str = env!("CARGO_PKG_VERSION");

// seed-derivation tags
const TAG_DISTRIBUTION: u64 = 11;
const TAG_DATA: u64 = 12;
const TAG_NOISE: u64 = 13;
const TAG_MC: u64 = 14;
const TAG_REFERENCE: u64 = 15;
const TAG_BOOTSTRAP: u64 = 16;
const TAG_PROBE: u64 = 17;

/// How the iteration count `T` follows from `(n, ε, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TRule {
    /// `max(1, ⌈c_T·ln(nε/√p)⌉)`
    LogNEps,
    /// `max(1, ⌈c_T·ln(√n·ε)⌉)`
    LogSqrtnEps,
    /// `t_fixed`
    Fixed,
}

impl TRule {
    pub fn iterations(self, c_t: f64, t_fixed: usize, n: usize, eps: f64, p: usize) -> usize {
        let arg = match self {
            TRule::LogNEps => n as f64 * eps / (p as f64).sqrt(),
            TRule::LogSqrtnEps => (n as f64).sqrt() * eps,
            TRule::Fixed => return t_fixed.max(1),
        };
        let t = (c_t * arg.ln()).ceil();
        if t.is_finite() && t >= 1.0 {
            t as usize
        } else {
            1
        }
    }
}

/// Flat key-value experiment description. Every field has a default, so a
/// config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub loss: LossKind,
    pub lambda: f64,
    pub constants: ConstantSource,
    /// Parameter-ball radius used for worst-case constants.
    pub radius: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub n_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    /// Feature dimensions `d`; the parameter count `p` follows from the loss.
    pub dim_grid: Vec<usize>,
    pub delta: f64,
    pub t_rule: TRule,
    pub c_t: f64,
    pub t_fixed: usize,
    pub calibration: CalibrationMethod,
    /// Replaces the calibrated σ in every cell.
    pub sigma_override: Option<f64>,
    pub seeds: usize,
    pub master_seed: u64,
    pub solver_tol: f64,
    pub population: bool,
    /// Reference sample size as a multiple of the largest `n`.
    pub reference_multiplier: usize,
    pub reference_pairs: usize,
    pub mc_pairs: usize,
    pub xi: f64,
    pub bootstrap: usize,
    pub cell_budget_secs: f64,
    pub record_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::BipartiteRanking,
            lambda: 0.1,
            constants: ConstantSource::Published,
            radius: 1.0,
            x_max: 1.0,
            y_max: 1.0,
            n_grid: vec![200, 400, 800, 1600],
            eps_grid: vec![1.0],
            dim_grid: vec![5],
            delta: 1e-5,
            t_rule: TRule::LogNEps,
            c_t: 3.0,
            t_fixed: 10,
            calibration: CalibrationMethod::MomentsAccountant,
            sigma_override: None,
            seeds: 20,
            master_seed: 0,
            solver_tol: 1e-10,
            population: true,
            reference_multiplier: 20,
            reference_pairs: 200_000,
            mc_pairs: 100_000,
            xi: 0.1,
            bootstrap: 1000,
            cell_budget_secs: 60.0,
            record_runtime: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss == LossKind::Custom {
            return Err(invalid("experiments only run the built-in losses"));
        }
        if self.n_grid.is_empty() || self.eps_grid.is_empty() || self.dim_grid.is_empty() {
            return Err(invalid("every grid needs at least one value"));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 2) {
            return Err(invalid(format!("grid n values must be ≥ 2, got {n}")));
        }
        if self.dim_grid.contains(&0) {
            return Err(invalid("grid dimensions must be ≥ 1"));
        }
        if let Some(e) = self.eps_grid.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
            return Err(invalid(format!("grid ε values must be positive, got {e}")));
        }
        PrivacyBudget::new(1.0, self.delta)?;
        if self.seeds < 1 {
            return Err(invalid("seeds must be ≥ 1"));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(invalid(format!("ξ must lie in (0, 1), got {}", self.xi)));
        }
        if !(self.c_t > 0.0) {
            return Err(invalid(format!("c_T must be positive, got {}", self.c_t)));
        }
        if self.t_rule == TRule::Fixed && self.t_fixed < 1 {
            return Err(invalid("t_fixed must be ≥ 1"));
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(invalid(format!("sigma_override must be finite and ≥ 0, got {s}")));
            }
        }
        if !(self.solver_tol > 0.0) {
            return Err(invalid("solver_tol must be positive"));
        }
        if self.population && (self.reference_multiplier < 1 || self.reference_pairs < 1 || self.mc_pairs < 1) {
            return Err(invalid("population estimates need positive reference sizes and mc_pairs"));
        }
        Ok(())
    }

    pub fn build_loss(&self) -> Result<PairwiseLoss> {
        PairwiseLoss::builtin(
            self.loss,
            self.lambda,
            Bounds {
                x_max: self.x_max,
                y_max: self.y_max,
            },
            self.radius,
            self.constants,
        )
    }

    fn bounds(&self) -> Bounds {
        Bounds {
            x_max: self.x_max,
            y_max: self.y_max,
        }
    }

    fn synthetic_kind(&self) -> SyntheticKind {
        match self.loss {
            LossKind::MetricLearning => SyntheticKind::Metric,
            _ => SyntheticKind::Ranking,
        }
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.solver_tol,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
    /// Finished, but slower than the per-cell budget.
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    /// `L̂_P(θ_priv) − L̂_P(θ_ref)` on common Monte-Carlo pairs.
    pub excess: f64,
    pub std_err: f64,
    pub generalization_error: f64,
    pub approximation_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub n: usize,
    pub eps: f64,
    pub dim: usize,
    pub p: usize,
    pub seed_index: usize,
    pub delta: f64,
    pub data_seed: u64,
    pub noise_seed: u64,
    pub mc_seed: u64,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub iterations: usize,
    pub sigma: f64,
    pub sigma_method: CalibrationMethod,
    pub sigma_satisfies_bound: bool,
    pub g: f64,
    pub eta: f64,
    /// `L(θ*; D)` and the solver's final gradient norm.
    pub empirical_min: f64,
    pub solver_grad_norm: f64,
    pub excess_empirical_risk: Option<f64>,
    pub population: Option<PopulationEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Empirical `(1−ξ)`-quantile (nearest rank).
    pub quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub n: usize,
    pub eps: f64,
    pub dim: usize,
    pub failed: usize,
    pub budget_exceeded: usize,
    pub excess_empirical: Option<Summary>,
    pub excess_population: Option<Summary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    Eps,
    Dim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    MeanExcessEmpirical,
    MeanExcessPopulation,
    /// `(1−ξ)`-quantile over seeds of the excess population risk.
    QuantileExcessPopulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub axis: Axis,
    pub statistic: Statistic,
    /// Values of the two axes held fixed.
    pub fixed_n: Option<usize>,
    pub fixed_eps: Option<f64>,
    pub fixed_dim: Option<usize>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: Option<f64>,
    /// 95% percentile bootstrap interval over seeds.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<CellRecord>,
    pub aggregates: Vec<CellAggregate>,
    pub slopes: Vec<SlopeFit>,
    pub version: String,
}

impl ExperimentReport {
    pub fn aggregate(&self, n: usize, eps: f64, dim: usize) -> Option<&CellAggregate> {
        self.aggregates.iter().find(|a| a.n == n && a.eps == eps && a.dim == dim)
    }

    pub fn slope(&self, axis: Axis, statistic: Statistic) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.axis == axis && s.statistic == statistic)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(invalid("x and y lengths differ"));
    }
    if xs.len() < 3 {
        return Err(invalid(format!("a slope fit needs ≥ 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid("log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("log-log fit needs at least two distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Nearest-rank `q`-quantile: the `⌈q·k⌉`-th smallest of `k` values.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len());
    s[rank - 1]
}

fn summarize(v: &[f64], xi: f64) -> Option<Summary> {
    if v.is_empty() {
        return None;
    }
    Some(Summary {
        count: v.len(),
        mean: mean(v),
        median: median(v),
        quantile: quantile(v, 1.0 - xi),
    })
}

fn statistic_value(stat: Statistic, values: &[f64], xi: f64) -> f64 {
    match stat {
        Statistic::MeanExcessEmpirical | Statistic::MeanExcessPopulation => mean(values),
        Statistic::QuantileExcessPopulation => quantile(values, 1.0 - xi),
    }
}

fn record_value(r: &CellRecord, stat: Statistic) -> Option<f64> {
    if r.status == CellStatus::Failed {
        return None;
    }
    match stat {
        Statistic::MeanExcessEmpirical => r.excess_empirical_risk,
        _ => r.population.as_ref().map(|p| p.excess),
    }
}

fn axis_value(r: &CellRecord, axis: Axis) -> f64 {
    match axis {
        Axis::N => r.n as f64,
        Axis::Eps => r.eps,
        Axis::Dim => r.dim as f64,
    }
}

/// Slope of `statistic` against `axis`, one fit per combination of the other
/// two axes. The interval resamples seed indices with replacement, using the
/// same resample at every grid point.
pub fn scaling_fit(report: &ExperimentReport, axis: Axis, statistic: Statistic) -> Result<Vec<SlopeFit>> {
    let cfg = &report.config;
    let points = match axis {
        Axis::N => cfg.n_grid.len(),
        Axis::Eps => cfg.eps_grid.len(),
        Axis::Dim => cfg.dim_grid.len(),
    };
    if points < 3 {
        return Err(invalid(format!("slope along {axis:?} needs ≥ 3 grid points, got {points}")));
    }
    let mut groups: BTreeMap<(u64, u64, u64), BTreeMap<u64, Vec<(usize, f64)>>> = BTreeMap::new();
    for r in &report.records {
        let key = match axis {
            Axis::N => (0, r.eps.to_bits(), r.dim as u64),
            Axis::Eps => (r.n as u64, 0, r.dim as u64),
            Axis::Dim => (r.n as u64, r.eps.to_bits(), 0),
        };
        if let Some(v) = record_value(r, statistic) {
            groups
                .entry(key)
                .or_default()
                .entry(axis_value(r, axis).to_bits())
                .or_default()
                .push((r.seed_index, v));
        }
    }
    let mut fits = Vec::new();
    for ((kn, ke, kd), by_x) in groups {
        let xs: Vec<f64> = by_x.keys().map(|b| f64::from_bits(*b)).collect();
        let ys: Vec<f64> = by_x
            .values()
            .map(|v| statistic_value(statistic, &v.iter().map(|p| p.1).collect::<Vec<_>>(), cfg.xi))
            .collect();
        let slope = fit_loglog(&xs, &ys).ok();
        let (ci_low, ci_high) = bootstrap_interval(&by_x, &xs, statistic, cfg, (kn, ke, kd, axis as u64));
        fits.push(SlopeFit {
            axis,
            statistic,
            fixed_n: (axis != Axis::N).then_some(kn as usize),
            fixed_eps: (axis != Axis::Eps).then_some(f64::from_bits(ke)),
            fixed_dim: (axis != Axis::Dim).then_some(kd as usize),
            xs,
            ys,
            slope,
            ci_low,
            ci_high,
        });
    }
    Ok(fits)
}

fn bootstrap_interval(
    by_x: &BTreeMap<u64, Vec<(usize, f64)>>,
    xs: &[f64],
    statistic: Statistic,
    cfg: &ExperimentConfig,
    key: (u64, u64, u64, u64),
) -> (Option<f64>, Option<f64>) {
    if cfg.bootstrap == 0 || xs.len() < 3 {
        return (None, None);
    }
    let lookup: Vec<BTreeMap<usize, f64>> = by_x.values().map(|v| v.iter().copied().collect()).collect();
    let seed = derive_seed(cfg.master_seed, &[TAG_BOOTSTRAP, key.0, key.1, key.2, key.3, statistic as u64]);
    let mut rng = stream_rng(seed, streams::PROBE);
    let mut slopes = Vec::with_capacity(cfg.bootstrap);
    for _ in 0..cfg.bootstrap {
        let pick: Vec<usize> = (0..cfg.seeds).map(|_| rng.random_range(0..cfg.seeds)).collect();
        let ys: Vec<f64> = lookup
            .iter()
            .map(|m| {
                let vals: Vec<f64> = pick.iter().filter_map(|s| m.get(s).copied()).collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    statistic_value(statistic, &vals, cfg.xi)
                }
            })
            .collect();
        if let Ok(s) = fit_loglog(xs, &ys) {
            slopes.push(s);
        }
    }
    // intervals from mostly invalid resamples are not reported
    if slopes.len() * 2 < cfg.bootstrap {
        return (None, None);
    }
    (Some(quantile(&slopes, 0.025)), Some(quantile(&slopes, 0.975)))
}

struct Group {
    dim: usize,
    n: usize,
    seed_index: usize,
}

/// Runs every `(p, n, ε, seed)` cell. Datasets depend on `(p, n, seed)` only,
/// so all ε values of a row share the dataset and its minimizer.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let loss = config.build_loss()?;
    let solver = config.solver();
    let n_max = *config.n_grid.iter().max().expect("validated");

    let mut distributions = Vec::new();
    let mut references: Vec<Option<ReferenceModel>> = Vec::new();
    for &dim in &config.dim_grid {
        let dist = SyntheticDistribution::new(
            config.synthetic_kind(),
            dim,
            derive_seed(config.master_seed, &[TAG_DISTRIBUTION, dim as u64]),
        )?;
        let reference = if config.population {
            let set = PairSet::sample(
                &dist,
                config.reference_multiplier * n_max,
                config.reference_pairs,
                derive_seed(config.master_seed, &[TAG_REFERENCE, dim as u64]),
            )?;
            Some(reference_minimizer(&loss, &set, &solver)?)
        } else {
            None
        };
        distributions.push(dist);
        references.push(reference);
    }

    let mut groups = Vec::new();
    for (di, &dim) in config.dim_grid.iter().enumerate() {
        for &n in &config.n_grid {
            for seed_index in 0..config.seeds {
                groups.push((di, Group { dim, n, seed_index }));
            }
        }
    }
    let rows = par_map(groups.len(), |g| {
        let (di, group) = &groups[g];
        run_group(config, &loss, &solver, &distributions[*di], references[*di].as_ref(), group)
    });
    let mut records: Vec<CellRecord> = rows.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (a.dim, a.n)
            .cmp(&(b.dim, b.n))
            .then(a.eps.total_cmp(&b.eps))
            .then(a.seed_index.cmp(&b.seed_index))
    });

    let mut aggregates = Vec::new();
    for &dim in &config.dim_grid {
        for &n in &config.n_grid {
            for &eps in &config.eps_grid {
                let cell: Vec<&CellRecord> = records.iter().filter(|r| r.dim == dim && r.n == n && r.eps == eps).collect();
                let emp: Vec<f64> = cell.iter().filter_map(|r| record_value(r, Statistic::MeanExcessEmpirical)).collect();
                let pop: Vec<f64> = cell.iter().filter_map(|r| record_value(r, Statistic::MeanExcessPopulation)).collect();
                aggregates.push(CellAggregate {
                    n,
                    eps,
                    dim,
                    failed: cell.iter().filter(|r| r.status == CellStatus::Failed).count(),
                    budget_exceeded: cell.iter().filter(|r| r.status == CellStatus::BudgetExceeded).count(),
                    excess_empirical: summarize(&emp, config.xi),
                    excess_population: summarize(&pop, config.xi),
                });
            }
        }
    }

    let mut report = ExperimentReport {
        config: config.clone(),
        records,
        aggregates,
        slopes: Vec::new(),
        version: REPORT_VERSION.to_string(),
    };
    let mut stats = vec![Statistic::MeanExcessEmpirical];
    if config.population {
        stats.extend([Statistic::MeanExcessPopulation, Statistic::QuantileExcessPopulation]);
    }
    let mut slopes = Vec::new();
    for axis in [Axis::N, Axis::Eps, Axis::Dim] {
        for &stat in &stats {
            if let Ok(fits) = scaling_fit(&report, axis, stat) {
                slopes.extend(fits);
            }
        }
    }
    report.slopes = slopes;
    Ok(report)
}

fn run_group(
    config: &ExperimentConfig,
    loss: &PairwiseLoss,
    solver: &SolverConfig,
    dist: &SyntheticDistribution,
    reference: Option<&ReferenceModel>,
    group: &Group,
) -> Vec<CellRecord> {
    let start = Instant::now();
    let Group { dim, n, seed_index } = *group;
    let p = loss.param_len(dim);
    let data_seed = derive_seed(config.master_seed, &[TAG_DATA, dim as u64, n as u64, seed_index as u64]);
    let mc_seed = derive_seed(config.master_seed, &[TAG_MC, dim as u64]);

    let blank = |eps: f64| CellRecord {
        n,
        eps,
        dim,
        p,
        seed_index,
        delta: config.delta,
        data_seed,
        noise_seed: derive_seed(
            config.master_seed,
            &[TAG_NOISE, dim as u64, n as u64, eps.to_bits(), seed_index as u64],
        ),
        mc_seed,
        status: CellStatus::Failed,
        error: None,
        iterations: 0,
        sigma: 0.0,
        sigma_method: config.calibration,
        sigma_satisfies_bound: false,
        g: loss.constants().g,
        eta: 1.0 / loss.constants().l,
        empirical_min: f64::NAN,
        solver_grad_norm: f64::NAN,
        excess_empirical_risk: None,
        population: None,
        runtime_secs: None,
    };

    let prepared = (|| -> Result<(Dataset, crate::optimizer::Solution)> {
        let mut rng = stream_rng(data_seed, streams::SAMPLES);
        let raw = dist.dataset(n, &mut rng, Some(data_seed))?;
        let d = Dataset::with_seed(raw.samples().to_vec(), config.bounds(), Some(data_seed))?;
        let sol = exact_minimize(loss, &d, solver, &vec![0.0; p])?.require_converged(solver.tol)?;
        Ok((d, sol))
    })();
    let shared_secs = start.elapsed().as_secs_f64();

    config
        .eps_grid
        .iter()
        .map(|&eps| {
            let mut rec = blank(eps);
            let cell_start = Instant::now();
            let outcome = match &prepared {
                Ok((d, sol)) => {
                    rec.empirical_min = sol.value;
                    rec.solver_grad_norm = sol.grad_norm;
                    run_cell(config, loss, dist, reference, d, sol, &mut rec)
                }
                Err(e) => Err(Error::InvalidArgument(e.to_string())),
            };
            let secs = shared_secs + cell_start.elapsed().as_secs_f64();
            match outcome {
                Ok(()) => {
                    rec.status = if secs > config.cell_budget_secs {
                        CellStatus::BudgetExceeded
                    } else {
                        CellStatus::Ok
                    };
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            if config.record_runtime {
                rec.runtime_secs = Some(secs);
            }
            rec
        })
        .collect()
}

fn run_cell(
    config: &ExperimentConfig,
    loss: &PairwiseLoss,
    dist: &SyntheticDistribution,
    reference: Option<&ReferenceModel>,
    d: &Dataset,
    sol: &crate::optimizer::Solution,
    rec: &mut CellRecord,
) -> Result<()> {
    let t = config.t_rule.iterations(config.c_t, config.t_fixed, rec.n, rec.eps, rec.p);
    rec.iterations = t;
    let noise = match config.sigma_override {
        Some(s) => NoiseScale {
            sigma: s,
            method: if s == 0.0 {
                CalibrationMethod::Disabled
            } else {
                config.calibration
            },
            inputs: None,
        },
        None => calibrate(
            config.calibration,
            loss.constants().g,
            t,
            rec.n,
            PrivacyBudget::new(rec.eps, config.delta)?,
        )?,
    };
    rec.sigma = noise.sigma;
    rec.sigma_method = noise.method;
    rec.sigma_satisfies_bound = noise.satisfies_ma_bound();
    let trained = dp_pairwise_gd(loss, d, &TrainConfig::new(t, noise, rec.noise_seed))?;
    rec.eta = trained.eta;
    let theta_priv = trained.theta_priv.as_slice();
    rec.excess_empirical_risk = Some(empirical_risk(loss, theta_priv, d)? - sol.value);
    if let Some(reference) = reference {
        let dec = excess_population_risk(
            ExcessRiskInputs {
                loss,
                dataset: d,
                theta_priv,
                theta_star: &sol.theta,
                reference_theta: &reference.theta,
            },
            PairSampler::Distribution(dist),
            config.mc_pairs,
            rec.mc_seed,
        )?;
        rec.population = Some(PopulationEstimate {
            excess: dec.total,
            std_err: dec.total_std_err,
            generalization_error: dec.generalization_error,
            approximation_gap: dec.approximation_gap,
        });
    }
    Ok(())
}

/// Stability sweep over dataset sizes, optionally on outlier-contaminated
/// copies of the same datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub loss: LossKind,
    pub lambda: f64,
    pub constants: ConstantSource,
    pub radius: f64,
    pub n_grid: Vec<usize>,
    pub dim: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub methods: Vec<StabilityMethod>,
    /// `None` means `min(n, 30)`.
    pub removals: Option<usize>,
    pub pairs: usize,
    pub uas_replacements: usize,
    /// Also run on copies whose first record is replaced by an outlier.
    pub outlier: bool,
    pub solver_tol: f64,
    /// Keep the full per-triple tables in the report.
    pub include_tables: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::BipartiteRanking,
            lambda: 0.1,
            constants: ConstantSource::Published,
            radius: 1.0,
            n_grid: vec![20, 40, 80],
            dim: 5,
            seeds: 20,
            master_seed: 0,
            methods: vec![StabilityMethod::Retrain, StabilityMethod::Influence],
            removals: None,
            pairs: 200,
            uas_replacements: 10,
            outlier: true,
            solver_tol: 1e-10,
            include_tables: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataVariant {
    Uniform,
    Outlier,
}

/// One line of the comparison table. All suprema are empirical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n: usize,
    pub seed_index: usize,
    pub data: DataVariant,
    pub method: StabilityMethod,
    pub n_beta_uniform: f64,
    pub n_beta_sup_mean: f64,
    pub n_beta_mean: f64,
    pub n_beta_median: f64,
    /// `β_nᵁ / sup_z E β`, absent when the denominator is 0.
    pub ratio: Option<f64>,
    pub kappa: Option<f64>,
    pub g_kappa: Option<f64>,
    /// Median over probed removals of `‖δ_influence − δ_retrain‖ / ‖δ_retrain‖`.
    pub influence_median_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityExperimentReport {
    pub config: StabilityConfig,
    pub rows: Vec<StabilityRow>,
    pub reports: Vec<StabilityReport>,
    pub version: String,
}

struct StabilityJob {
    n: usize,
    seed_index: usize,
    data: DataVariant,
}

pub fn stability_experiment(config: &StabilityConfig) -> Result<StabilityExperimentReport> {
    if config.loss == LossKind::Custom {
        return Err(invalid("stability sweeps only run the built-in losses"));
    }
    if config.seeds < 1 || config.methods.is_empty() || config.n_grid.is_empty() {
        return Err(invalid("stability sweep needs seeds, methods and sizes"));
    }
    let loss = PairwiseLoss::builtin(config.loss, config.lambda, Bounds::UNIT, config.radius, config.constants)?;
    let solver = SolverConfig {
        tol: config.solver_tol,
        ..SolverConfig::default()
    };
    let kind = match config.loss {
        LossKind::MetricLearning => SyntheticKind::Metric,
        _ => SyntheticKind::Ranking,
    };
    let dist = SyntheticDistribution::new(kind, config.dim, derive_seed(config.master_seed, &[TAG_DISTRIBUTION]))?;
    let mut jobs = Vec::new();
    for &n in &config.n_grid {
        for seed_index in 0..config.seeds {
            jobs.push(StabilityJob {
                n,
                seed_index,
                data: DataVariant::Uniform,
            });
            if config.outlier {
                jobs.push(StabilityJob {
                    n,
                    seed_index,
                    data: DataVariant::Outlier,
                });
            }
        }
    }
    let results = par_map(jobs.len(), |j| stability_job(config, &loss, &solver, &dist, &jobs[j]));
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for r in results {
        let (mut rs, reps) = r?;
        rows.append(&mut rs);
        reports.extend(reps);
    }
    Ok(StabilityExperimentReport {
        config: config.clone(),
        rows,
        reports,
        version: REPORT_VERSION.to_string(),
    })
}

fn stability_job(
    config: &StabilityConfig,
    loss: &PairwiseLoss,
    solver: &SolverConfig,
    dist: &SyntheticDistribution,
    job: &StabilityJob,
) -> Result<(Vec<StabilityRow>, Vec<StabilityReport>)> {
    let n = job.n;
    let data_seed = derive_seed(config.master_seed, &[TAG_DATA, n as u64, job.seed_index as u64]);
    let mut rng = stream_rng(data_seed, streams::SAMPLES);
    let mut d = dist.dataset(n, &mut rng, Some(data_seed))?;
    if job.data == DataVariant::Outlier {
        d = d.replaced(0, dist.outlier())?;
    }
    let probe_seed = derive_seed(config.master_seed, &[TAG_PROBE, n as u64, job.seed_index as u64]);
    let probe = StabilityProbe {
        removals: config.removals.unwrap_or(n.min(30)).min(n),
        pairs: config.pairs.min((n - 1) * (n - 2)),
        seed: probe_seed,
    };
    let uas = if config.uas_replacements > 0 {
        Some(estimate_uas(
            loss,
            &d,
            &Trainer::Exact(*solver),
            ReplacementSource::Distribution(dist),
            config.uas_replacements,
            probe_seed,
        )?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &method in &config.methods {
        let mut rep = beta_statistics(loss, &d, method, &probe, solver)?;
        let influence_err = if method == StabilityMethod::Influence {
            let idx: Vec<usize> = rep.removals.iter().map(|r| r.removed).collect();
            let errs = influence_errors(loss, &d, solver, &idx)?;
            Some(median(&errs))
        } else {
            None
        };
        let nf = n as f64;
        rows.push(StabilityRow {
            n,
            seed_index: job.seed_index,
            data: job.data,
            method,
            n_beta_uniform: nf * rep.beta_uniform,
            n_beta_sup_mean: nf * rep.beta_sup_mean,
            n_beta_mean: nf * rep.beta_mean,
            n_beta_median: rep.n_beta_median,
            ratio: (rep.beta_sup_mean > 0.0).then(|| rep.beta_uniform / rep.beta_sup_mean),
            kappa: uas.as_ref().map(|u| u.kappa),
            g_kappa: uas.as_ref().map(|u| u.g_kappa),
            influence_median_rel_error: influence_err,
        });
        if !config.include_tables {
            rep.beta_table.clear();
        }
        reports.push(rep);
    }
    Ok((rows, reports))
}

/// Serializes with every floating-point number written to 17 significant
/// digits, which round-trips `f64` exactly.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    const STEP: usize = 2;
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(num) => {
            if num.is_f64() {
                out.push_str(&format_float(num.as_f64().expect("f64 number")));
            } else {
                out.push_str(&num.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ",\n" });
                out.push_str(&" ".repeat(indent + STEP));
                write_value(item, indent + STEP, out);
            }
            out.push('\n');
            out.push_str(&" ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ",\n" });
                out.push_str(&" ".repeat(indent + STEP));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(item, indent + STEP, out);
            }
            out.push('\n');
            out.push_str(&" ".repeat(indent));
            out.push('}');
        }
    }
}
