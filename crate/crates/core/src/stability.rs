//! Leave-one-out retraining, pairwise influence functions and sampled
//! elastic / uniform stability statistics.
//!
//! Every supremum reported here is taken over the sampled probe grid or the
//! observed data, never over the data universe.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample, SyntheticDistribution};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dist2, dot, norm2, Cholesky, Matrix};
use crate::losses::PairwiseLoss;
use crate::optimizer::{dp_pairwise_gd, exact_minimize, SolverConfig, TrainConfig};
use crate::risk::{empirical_risk_grad, empirical_risk_hessian, par_map};
use crate::rng::{derive_seed, stream_rng, streams};
use crate::ModelParams;

/// Relative ridge factors tried in order, scaled by `trace(H)/p`.
pub const DAMPING_LADDER: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];

/// Largest `‖∇L(θ*)‖₂` accepted as a minimizer by [`influence_loo`].
pub const STATIONARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    /// First success of [`DAMPING_LADDER`].
    Ladder,
    /// A fixed absolute ridge `γ`.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    Retrain,
    Influence,
}

impl std::str::FromStr for StabilityMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrain" => Ok(Self::Retrain),
            "influence" => Ok(Self::Influence),
            other => Err(invalid(format!("unknown stability method `{other}` (expected retrain|influence)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceResult {
    /// Predicted `A*(D^{-i}) − A*(D)`.
    pub delta_theta: Vec<f64>,
    pub hessian_damping: f64,
    /// `‖(H + γI)δ − r‖₂`
    pub residual: f64,
}

/// Cholesky factor of the damped empirical-risk Hessian at a minimizer,
/// shared by every influence solve on the same dataset.
#[derive(Debug, Clone)]
pub struct HessianFactor {
    damped: Matrix,
    chol: Cholesky,
    gamma: f64,
    asymmetry: f64,
}

impl HessianFactor {
    pub fn new(loss: &PairwiseLoss, theta: &[f64], d: &Dataset, damping: Damping) -> Result<Self> {
        let raw = empirical_risk_hessian(loss, theta, d)?;
        let asymmetry = raw.max_asymmetry();
        let p = raw.dim();
        let mut h = Matrix::zeros(p);
        for a in 0..p {
            for b in 0..p {
                h[(a, b)] = 0.5 * (raw[(a, b)] + raw[(b, a)]);
            }
        }
        let gammas: Vec<f64> = match damping {
            Damping::Fixed(g) => {
                if !(g >= 0.0) || !g.is_finite() {
                    return Err(invalid(format!("damping must be finite and ≥ 0, got {g}")));
                }
                vec![g]
            }
            Damping::Ladder => {
                let scale = (h.trace() / p as f64).abs();
                DAMPING_LADDER.iter().map(|f| f * scale).collect()
            }
        };
        let mut last = 0.0;
        for gamma in gammas {
            last = gamma;
            let mut damped = h.clone();
            damped.add_diagonal(gamma);
            if let Some(chol) = Cholesky::new(&damped) {
                return Ok(Self {
                    damped,
                    chol,
                    gamma,
                    asymmetry,
                });
            }
        }
        Err(Error::Singular { gamma: last })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pivots(&self) -> Vec<f64> {
        self.chol.pivots()
    }

    /// Largest `|H_ab − H_ba|` before symmetrization.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn matrix(&self) -> &Matrix {
        &self.damped
    }

    /// Solves the damped system and reports the residual norm.
    pub fn solve(&self, rhs: &[f64]) -> InfluenceResult {
        let delta = self.chol.solve(rhs);
        let hd = self.damped.mul_vec(&delta);
        let residual = norm2(&hd.iter().zip(rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
        InfluenceResult {
            delta_theta: delta,
            hessian_damping: self.gamma,
            residual,
        }
    }
}

/// `(1/(n(n−1))) Σ_{j≠i} (∇ℓ(θ; z_i, z_j) + ∇ℓ(θ; z_j, z_i))`, regularizer
/// included in every pair term.
pub fn influence_rhs(loss: &PairwiseLoss, theta: &[f64], d: &Dataset, i: usize) -> Result<Vec<f64>> {
    let n = d.len();
    if i >= n {
        return Err(invalid(format!("index {i} out of range for n = {n}")));
    }
    let p = loss.param_len(d.dim());
    if theta.len() != p {
        return Err(Error::Layout {
            expected: p,
            got: theta.len(),
        });
    }
    let scale = 1.0 / (n as f64 * (n - 1) as f64);
    let zi = d.sample(i);
    let mut out = vec![0.0; p];
    for j in (0..n).filter(|&j| j != i) {
        let zj = d.sample(j);
        loss.add_data_grad(theta, zi, zj, scale, &mut out);
        loss.add_data_grad(theta, zj, zi, scale, &mut out);
    }
    let reg = 2.0 * (n - 1) as f64 * scale * 2.0 * loss.lambda();
    if reg != 0.0 {
        for (o, t) in out.iter_mut().zip(theta) {
            *o += reg * t;
        }
    }
    Ok(out)
}

/// Exact `A*(D^{-i})`: the minimizer of the risk over the `(n−1)(n−2)`
/// ordered pairs that avoid sample `i`, started from the origin.
pub fn retrain_loo(loss: &PairwiseLoss, d: &Dataset, i: usize, cfg: &SolverConfig) -> Result<ModelParams> {
    let start = vec![0.0; loss.param_len(d.dim())];
    retrain_loo_from(loss, d, i, cfg, &start)
}

/// [`retrain_loo`] warm-started at `theta0`, typically the full-data minimizer.
pub fn retrain_loo_from(
    loss: &PairwiseLoss,
    d: &Dataset,
    i: usize,
    cfg: &SolverConfig,
    theta0: &[f64],
) -> Result<ModelParams> {
    if d.len() < 3 {
        return Err(invalid(format!("leave-one-out needs n ≥ 3, got {}", d.len())));
    }
    let reduced = d.without(i)?;
    let sol = exact_minimize(loss, &reduced, cfg, theta0)?.require_converged(cfg.tol)?;
    ModelParams::new(sol.theta, loss.layout(d.dim()))
}

/// First-order prediction of `A*(D^{-i}) − A*(D)` from the Hessian at the
/// minimizer `theta_star`.
pub fn influence_loo(
    loss: &PairwiseLoss,
    theta_star: &[f64],
    d: &Dataset,
    i: usize,
    damping: Damping,
) -> Result<InfluenceResult> {
    let g = norm2(&empirical_risk_grad(loss, theta_star, d)?);
    if !(g <= STATIONARITY_TOL) {
        return Err(invalid(format!(
            "theta_star is not a minimizer: gradient norm {g:e} > {STATIONARITY_TOL:e}"
        )));
    }
    let factor = HessianFactor::new(loss, theta_star, d, damping)?;
    Ok(factor.solve(&influence_rhs(loss, theta_star, d, i)?))
}

/// `‖δ_influence − δ_retrain‖₂ / ‖δ_retrain‖₂` for each index, where
/// `δ_retrain = A*(D^{-i}) − A*(D)` comes from exact retraining. Indices whose
/// exact shift is zero give 0 when the prediction is also zero and `+∞`
/// otherwise.
pub fn influence_errors(loss: &PairwiseLoss, d: &Dataset, solver: &SolverConfig, indices: &[usize]) -> Result<Vec<f64>> {
    let p = loss.param_len(d.dim());
    let full = exact_minimize(loss, d, solver, &vec![0.0; p])?.require_converged(solver.tol)?;
    let factor = HessianFactor::new(loss, &full.theta, d, Damping::Ladder)?;
    par_map(indices.len(), |r| {
        let i = indices[r];
        let exact = retrain_loo_from(loss, d, i, solver, &full.theta)?;
        let shift: Vec<f64> = exact.as_slice().iter().zip(&full.theta).map(|(a, b)| a - b).collect();
        let pred = factor.solve(&influence_rhs(loss, &full.theta, d, i)?);
        let err = dist2(&pred.delta_theta, &shift);
        let scale = norm2(&shift);
        Ok(if scale > 0.0 {
            err / scale
        } else if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        })
    })
    .into_iter()
    .collect()
}

/// `β_n(z_i; z_j, z_k) = |ℓ(θ_full; z_j, z_k) − ℓ(θ_loo; z_j, z_k)|`
pub fn elastic_beta(loss: &PairwiseLoss, theta_full: &[f64], theta_loo: &[f64], zj: &Sample, zk: &Sample) -> Result<f64> {
    let a = loss.value(theta_full, zj, zk)?;
    let b = loss.value(theta_loo, zj, zk)?;
    Ok((a - b).abs())
}

/// Taylor proxy `|δᵀ∇ℓ(θ_full; z_j, z_k)|` for [`elastic_beta`].
pub fn elastic_beta_first_order(loss: &PairwiseLoss, theta_full: &[f64], delta: &[f64], zj: &Sample, zk: &Sample) -> Result<f64> {
    if delta.len() != theta_full.len() {
        return Err(Error::Layout {
            expected: theta_full.len(),
            got: delta.len(),
        });
    }
    Ok(dot(delta, &loss.grad(theta_full, zj, zk)?).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityProbe {
    pub removals: usize,
    pub pairs: usize,
    pub seed: u64,
}

impl StabilityProbe {
    /// `min(n, 30)` removals with up to 200 pairs each.
    pub fn default_for(n: usize, seed: u64) -> Self {
        Self {
            removals: n.min(30),
            pairs: (n.saturating_sub(1) * n.saturating_sub(2)).clamp(1, 200),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSample {
    pub removed: usize,
    pub j: usize,
    pub k: usize,
    pub beta_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalSummary {
    pub removed: usize,
    /// `‖θ_loo − θ_full‖₂`
    pub shift: f64,
    pub mean_beta_n: f64,
    pub max_beta_n: f64,
}

/// Sampled elastic-stability statistics. All suprema are empirical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub method: StabilityMethod,
    pub n: usize,
    pub probe: StabilityProbe,
    pub beta_table: Vec<BetaSample>,
    pub removals: Vec<RemovalSummary>,
    /// Max of `β_n` over all sampled triples.
    pub beta_uniform: f64,
    /// Max over removed samples of the mean `β_n` over sampled pairs.
    pub beta_sup_mean: f64,
    pub beta_mean: f64,
    /// Median of `n·β_n` over the table.
    pub n_beta_median: f64,
    pub theta_full: Vec<f64>,
    pub hessian_damping: Option<f64>,
}

/// Distinct probe indices: `removals` samples to drop, and for each one
/// `pairs` distinct ordered pairs `(j, k)` of the remaining samples.
fn probe_grid(n: usize, probe: &StabilityProbe) -> Result<Vec<(usize, Vec<(usize, usize)>)>> {
    if n < 3 {
        return Err(invalid(format!("stability probes need n ≥ 3, got {n}")));
    }
    let available = (n - 1) * (n - 2);
    if probe.removals == 0 || probe.removals > n {
        return Err(invalid(format!("removals must be in 1..={n}, got {}", probe.removals)));
    }
    if probe.pairs == 0 || probe.pairs > available {
        return Err(invalid(format!(
            "pairs per removal must be in 1..={available}, got {}",
            probe.pairs
        )));
    }
    let mut rng = stream_rng(probe.seed, streams::PROBE);
    let mut removed: Vec<usize> = index::sample(&mut rng, n, probe.removals).into_vec();
    removed.sort_unstable();
    Ok(removed
        .into_iter()
        .map(|i| {
            let mut r = stream_rng(derive_seed(probe.seed, &[i as u64]), streams::PROBE);
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let m = n - 2;
            let pairs = index::sample(&mut r, available, probe.pairs)
                .into_iter()
                .map(|idx| {
                    let a = idx / m;
                    let c = idx % m;
                    let b = if c < a { c } else { c + 1 };
                    (others[a], others[b])
                })
                .collect();
            (i, pairs)
        })
        .collect())
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Samples `β_n(z_i; z_j, z_k)` over the probe grid, with `θ_loo` from exact
/// retraining or from the influence prediction `θ* + δ`.
pub fn beta_statistics(
    loss: &PairwiseLoss,
    d: &Dataset,
    method: StabilityMethod,
    probe: &StabilityProbe,
    solver: &SolverConfig,
) -> Result<StabilityReport> {
    let n = d.len();
    let grid = probe_grid(n, probe)?;
    let p = loss.param_len(d.dim());
    let full = exact_minimize(loss, d, solver, &vec![0.0; p])?.require_converged(solver.tol)?;
    let theta = full.theta;

    let (loo, damping): (Vec<Result<Vec<f64>>>, Option<f64>) = match method {
        StabilityMethod::Retrain => (
            par_map(grid.len(), |r| {
                retrain_loo_from(loss, d, grid[r].0, solver, &theta).map(|m| m.theta)
            }),
            None,
        ),
        StabilityMethod::Influence => {
            let factor = HessianFactor::new(loss, &theta, d, Damping::Ladder)?;
            let out = par_map(grid.len(), |r| {
                let rhs = influence_rhs(loss, &theta, d, grid[r].0)?;
                let delta = factor.solve(&rhs).delta_theta;
                Ok(theta.iter().zip(&delta).map(|(t, dl)| t + dl).collect())
            });
            (out, Some(factor.gamma()))
        }
    };

    let mut beta_table = Vec::with_capacity(grid.len() * probe.pairs);
    let mut removals = Vec::with_capacity(grid.len());
    for ((i, pairs), theta_loo) in grid.iter().zip(loo) {
        let theta_loo = theta_loo?;
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for &(j, k) in pairs {
            let b = elastic_beta(loss, &theta, &theta_loo, d.sample(j), d.sample(k))?;
            sum += b;
            max = max.max(b);
            beta_table.push(BetaSample {
                removed: *i,
                j,
                k,
                beta_n: b,
            });
        }
        removals.push(RemovalSummary {
            removed: *i,
            shift: dist2(&theta, &theta_loo),
            mean_beta_n: sum / pairs.len() as f64,
            max_beta_n: max,
        });
    }

    let beta_uniform = removals.iter().map(|r| r.max_beta_n).fold(0.0, f64::max);
    let beta_sup_mean = removals.iter().map(|r| r.mean_beta_n).fold(0.0, f64::max);
    // equal pair counts per removal, so the global mean is the mean of the
    // conditional means; the clamp only absorbs rounding
    let beta_mean = (removals.iter().map(|r| r.mean_beta_n).sum::<f64>() / removals.len() as f64).min(beta_sup_mean);
    let mut scaled: Vec<f64> = beta_table.iter().map(|b| n as f64 * b.beta_n).collect();
    let n_beta_median = median(&mut scaled);

    Ok(StabilityReport {
        method,
        n,
        probe: *probe,
        beta_table,
        removals,
        beta_uniform,
        beta_sup_mean: beta_sup_mean.min(beta_uniform),
        beta_mean,
        n_beta_median,
        theta_full: theta,
        hessian_damping: damping,
    })
}

/// How a model is fitted for argument-stability estimates.
#[derive(Debug, Clone, PartialEq)]
pub enum Trainer {
    /// Noiseless minimizer from the origin.
    Exact(SolverConfig),
    /// Noisy gradient descent. The seed in the config is reused for both
    /// adjacent datasets, so the two runs see the same noise sequence.
    Private(TrainConfig),
}

impl Trainer {
    pub fn train(&self, loss: &PairwiseLoss, d: &Dataset) -> Result<Vec<f64>> {
        match self {
            Trainer::Exact(cfg) => {
                let start = vec![0.0; loss.param_len(d.dim())];
                Ok(exact_minimize(loss, d, cfg, &start)?.require_converged(cfg.tol)?.theta)
            }
            Trainer::Private(cfg) => Ok(dp_pairwise_gd(loss, d, cfg)?.theta_priv.theta),
        }
    }
}

/// Where replacement records come from.
#[derive(Debug, Clone, Copy)]
pub enum ReplacementSource<'a> {
    /// A fresh draw from the distribution.
    Distribution(&'a SyntheticDistribution),
    /// A copy of another record of the same dataset.
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacementShift {
    pub index: usize,
    /// `‖A(D) − A(D′)‖₂`
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UasEstimate {
    /// Max of the sampled distances.
    pub kappa: f64,
    /// `G·κ`, comparable with a uniform-stability estimate.
    pub g_kappa: f64,
    pub shifts: Vec<ReplacementShift>,
}

/// Empirical uniform argument stability over `replacements` random
/// single-record replacements.
pub fn estimate_uas(
    loss: &PairwiseLoss,
    d: &Dataset,
    trainer: &Trainer,
    source: ReplacementSource<'_>,
    replacements: usize,
    seed: u64,
) -> Result<UasEstimate> {
    if replacements == 0 {
        return Err(invalid("need at least one replacement"));
    }
    let n = d.len();
    let base = trainer.train(loss, d)?;
    let mut rng = stream_rng(seed, streams::PROBE);
    let plan: Vec<(usize, Sample)> = (0..replacements)
        .map(|_| {
            let i = rng.random_range(0..n);
            let s = match source {
                ReplacementSource::Distribution(dist) => dist.draw(&mut rng),
                ReplacementSource::Resample => {
                    let mut j = rng.random_range(0..n);
                    while j == i {
                        j = rng.random_range(0..n);
                    }
                    d.sample(j).clone()
                }
            };
            (i, s)
        })
        .collect();
    let shifts = par_map(plan.len(), |r| -> Result<ReplacementShift> {
        let (i, s) = &plan[r];
        let theta = trainer.train(loss, &d.replaced(*i, s.clone())?)?;
        Ok(ReplacementShift {
            index: *i,
            distance: dist2(&base, &theta),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let kappa = shifts.iter().map(|s| s.distance).fold(0.0, f64::max);
    Ok(UasEstimate {
        kappa,
        g_kappa: loss.constants().g * kappa,
        shifts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, Bounds, SyntheticKind};
    use crate::losses::{ConstantSource, LossKind};

    fn ranking(lambda: f64) -> PairwiseLoss {
        PairwiseLoss::builtin(LossKind::BipartiteRanking, lambda, Bounds::UNIT, 1.0, ConstantSource::WorstCase).unwrap()
    }

    fn identical(n: usize) -> Dataset {
        Dataset::new(vec![Sample::new(vec![0.3, -0.2, 0.1], 0.5); n], Bounds::UNIT).unwrap()
    }

    fn solver() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn elastic_beta_of_identical_models_is_zero() {
        let loss = ranking(0.1);
        let d = gen_synthetic(SyntheticKind::Ranking, 5, 3, 1).unwrap();
        let th = [0.4, -0.1, 0.7];
        assert_eq!(elastic_beta(&loss, &th, &th, d.sample(0), d.sample(1)).unwrap(), 0.0);
    }

    #[test]
    fn loo_on_identical_data_matches_full() {
        let loss = ranking(0.1);
        let d = identical(6);
        let full = exact_minimize(&loss, &d, &solver(), &[0.2, 0.2, 0.2]).unwrap();
        let loo = retrain_loo(&loss, &d, 2, &solver()).unwrap();
        assert!(dist2(&full.theta, loo.as_slice()) <= 10.0 * 1e-10 / 0.1);
    }

    #[test]
    fn loo_with_three_samples_uses_remaining_pair() {
        let loss = ranking(0.1);
        let d = gen_synthetic(SyntheticKind::Ranking, 3, 2, 4).unwrap();
        let loo = retrain_loo(&loss, &d, 0, &solver()).unwrap();
        let pair = Dataset::new(vec![d.sample(1).clone(), d.sample(2).clone()], Bounds::UNIT).unwrap();
        let direct = exact_minimize(&loss, &pair, &solver(), &[0.0, 0.0]).unwrap();
        assert!(dist2(loo.as_slice(), &direct.theta) < 1e-12);
        assert!(retrain_loo(&loss, &pair, 0, &solver()).is_err());
    }

    #[test]
    fn zero_rhs_gives_zero_shift() {
        let loss = ranking(0.1);
        let d = identical(8);
        let sol = exact_minimize(&loss, &d, &solver(), &[0.0; 3]).unwrap();
        let r = influence_loo(&loss, &sol.theta, &d, 3, Damping::Ladder).unwrap();
        assert!(r.delta_theta.iter().all(|v| *v == 0.0));
        assert_eq!(r.hessian_damping, 0.0);
    }

    #[test]
    fn influence_requires_minimizer() {
        let loss = ranking(0.1);
        let d = gen_synthetic(SyntheticKind::Ranking, 10, 3, 2).unwrap();
        assert!(influence_loo(&loss, &[1.0, 1.0, 1.0], &d, 0, Damping::Ladder).is_err());
    }

    #[test]
    fn influence_tracks_retraining() {
        let loss = ranking(0.1);
        let d = gen_synthetic(SyntheticKind::Ranking, 20, 3, 5).unwrap();
        let sol = exact_minimize(&loss, &d, &solver(), &[0.0; 3]).unwrap();
        let factor = HessianFactor::new(&loss, &sol.theta, &d, Damping::Ladder).unwrap();
        assert!(factor.pivots().iter().all(|p| *p > 0.0));
        let mut good = 0;
        for i in 0..d.len() {
            let exact = retrain_loo_from(&loss, &d, i, &solver(), &sol.theta).unwrap();
            let shift: Vec<f64> = exact.as_slice().iter().zip(&sol.theta).map(|(a, b)| a - b).collect();
            let pred = factor.solve(&influence_rhs(&loss, &sol.theta, &d, i).unwrap());
            assert!(pred.residual < 1e-12);
            if dist2(&pred.delta_theta, &shift) <= 0.5 * norm2(&shift) {
                good += 1;
            }
        }
        assert!(good as f64 >= 0.9 * d.len() as f64, "{good}/20");
    }

    #[test]
    fn fixed_damping_is_used_verbatim() {
        let loss = ranking(0.0);
        let d = identical(5);
        // data Hessian vanishes, so only a positive ridge factors
        assert!(matches!(
            HessianFactor::new(&loss, &[0.0; 3], &d, Damping::Fixed(0.0)),
            Err(Error::Singular { .. })
        ));
        let f = HessianFactor::new(&loss, &[0.0; 3], &d, Damping::Fixed(0.5)).unwrap();
        assert_eq!(f.gamma(), 0.5);
    }

    #[test]
    fn report_ordering_and_bounds() {
        let loss = ranking(0.1);
        let d = gen_synthetic(SyntheticKind::Ranking, 15, 3, 8).unwrap();
        let g = loss.constants().g;
        for method in [StabilityMethod::Retrain, StabilityMethod::Influence] {
            let probe = StabilityProbe {
                removals: 6,
                pairs: 40,
                seed: 3,
            };
            let r = beta_statistics(&loss, &d, method, &probe, &solver()).unwrap();
            assert!(r.beta_uniform >= r.beta_sup_mean && r.beta_sup_mean >= r.beta_mean && r.beta_mean >= 0.0);
            assert_eq!(r.beta_table.len(), 240);
            for b in &r.beta_table {
                let shift = r.removals.iter().find(|s| s.removed == b.removed).unwrap().shift;
                assert!(b.beta_n <= g * shift + 1e-12);
                assert!(b.j != b.k && b.j != b.removed && b.k != b.removed);
            }
            let again = beta_statistics(&loss, &d, method, &probe, &solver()).unwrap();
            assert_eq!(r, again);
        }
    }

    #[test]
    fn degenerate_dataset_has_zero_statistics() {
        let loss = ranking(0.1);
        let d = identical(10);
        for method in [StabilityMethod::Retrain, StabilityMethod::Influence] {
            let r = beta_statistics(&loss, &d, method, &StabilityProbe::default_for(10, 1), &solver()).unwrap();
            assert_eq!((r.beta_uniform, r.beta_sup_mean, r.beta_mean), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn probe_larger_than_data_is_rejected() {
        let loss = ranking(0.1);
        let d = gen_synthetic(SyntheticKind::Ranking, 5, 2, 1).unwrap();
        let too_many_removals = StabilityProbe {
            removals: 6,
            pairs: 1,
            seed: 0,
        };
        let too_many_pairs = StabilityProbe {
            removals: 2,
            pairs: 13,
            seed: 0,
        };
        for p in [too_many_removals, too_many_pairs] {
            assert!(beta_statistics(&loss, &d, StabilityMethod::Retrain, &p, &solver()).is_err());
        }
    }

    #[test]
    fn uas_dominates_uniform_beta_and_ignores_identical_swaps() {
        let loss = ranking(0.1);
        let d = gen_synthetic(SyntheticKind::Ranking, 12, 3, 6).unwrap();
        let trainer = Trainer::Exact(solver());
        let uas = estimate_uas(&loss, &d, &trainer, ReplacementSource::Resample, 12, 2).unwrap();
        let report = beta_statistics(&loss, &d, StabilityMethod::Retrain, &StabilityProbe::default_for(12, 2), &solver()).unwrap();
        assert!(uas.g_kappa >= report.beta_uniform);

        let base = trainer.train(&loss, &d).unwrap();
        let same = trainer.train(&loss, &d.replaced(4, d.sample(4).clone()).unwrap()).unwrap();
        assert_eq!(dist2(&base, &same), 0.0);
    }
}
