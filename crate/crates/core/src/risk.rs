//! Pairwise empirical risk, Monte-Carlo population risk and the excess-risk
//! decomposition.
//!
//! All accumulations over the `n(n−1)` ordered pairs are split into fixed
//! blocks of rows; blocks may be evaluated on any number of threads but are
//! always combined left to right, so results are bit-identical regardless of
//! the worker count.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{uniform_ball, Dataset, Sample, SyntheticDistribution};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::losses::{phi, phi_prime, LossKind, PairwiseLoss};
use crate::optimizer::{exact_minimize, minimize_with, SolverConfig};
use crate::rng::{derive_seed, stream_rng, streams};

const ROW_BLOCK: usize = 16;
const MC_CHUNK: usize = 4096;

/// Maps fixed index blocks of `0..n` and combines them in block order.
pub(crate) fn blocked_reduce<T, F, C>(n: usize, block: usize, map: F, mut combine: C) -> Option<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
    C: FnMut(T, T) -> T,
{
    let blocks: Vec<Range<usize>> = (0..n.div_ceil(block)).map(|b| b * block..((b + 1) * block).min(n)).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<T> = {
        use rayon::prelude::*;
        blocks.into_par_iter().map(map).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<T> = blocks.into_iter().map(map).collect();
    let mut it = parts.into_iter();
    let first = it.next()?;
    Some(it.fold(first, &mut combine))
}

/// `f(0..n)` in index order, evaluated on the worker pool when available.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn add_vec(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    a
}

fn check_inputs(loss: &PairwiseLoss, theta: &[f64], d: &Dataset) -> Result<()> {
    let expected = loss.param_len(d.dim());
    if theta.len() != expected {
        return Err(Error::Layout {
            expected,
            got: theta.len(),
        });
    }
    if d.len() < 2 {
        return Err(invalid("pairwise risk needs n ≥ 2"));
    }
    Ok(())
}

fn ranking_scores(theta: &[f64], d: &Dataset) -> Vec<f64> {
    d.samples().iter().map(|s| dot(theta, &s.x)).collect()
}

/// `L(θ; D) = 1/(n(n−1)) Σ_i Σ_{j≠i} ℓ(θ; z_i, z_j)`
pub fn empirical_risk(loss: &PairwiseLoss, theta: &[f64], d: &Dataset) -> Result<f64> {
    check_inputs(loss, theta, d)?;
    let n = d.len();
    let samples = d.samples();
    let data_sum = if loss.kind() == LossKind::BipartiteRanking {
        let s = ranking_scores(theta, d);
        blocked_reduce(
            n,
            ROW_BLOCK,
            |rows| {
                let mut acc = 0.0;
                for i in rows {
                    for j in (0..n).filter(|&j| j != i) {
                        acc += phi((samples[i].y - samples[j].y) * (s[i] - s[j]));
                    }
                }
                acc
            },
            |a, b| a + b,
        )
    } else {
        blocked_reduce(
            n,
            ROW_BLOCK,
            |rows| {
                let mut acc = 0.0;
                for i in rows {
                    for j in (0..n).filter(|&j| j != i) {
                        acc += loss.data_value(theta, &samples[i], &samples[j]);
                    }
                }
                acc
            },
            |a, b| a + b,
        )
    }
    .expect("n ≥ 2");
    Ok(data_sum / (n * (n - 1)) as f64 + loss.regularizer(theta))
}

/// Average of the pairwise gradients, the quantity the private update perturbs.
pub fn empirical_risk_grad(loss: &PairwiseLoss, theta: &[f64], d: &Dataset) -> Result<Vec<f64>> {
    check_inputs(loss, theta, d)?;
    let n = d.len();
    let p = theta.len();
    let samples = d.samples();
    let mut g = if loss.kind() == LossKind::BipartiteRanking {
        ranking_grad_sum(theta, d)
    } else {
        blocked_reduce(
            n,
            ROW_BLOCK,
            |rows| {
                let mut acc = vec![0.0; p];
                for i in rows {
                    for j in (0..n).filter(|&j| j != i) {
                        loss.add_data_grad(theta, &samples[i], &samples[j], 1.0, &mut acc);
                    }
                }
                acc
            },
            add_vec,
        )
        .expect("n ≥ 2")
    };
    let scale = 1.0 / (n * (n - 1)) as f64;
    let two_lambda = 2.0 * loss.lambda();
    for (gi, t) in g.iter_mut().zip(theta) {
        *gi = *gi * scale + two_lambda * t;
    }
    Ok(g)
}

/// `Σ_i Σ_{j≠i} φ′(u_ij)(y_i − y_j)(x_i − x_j)` using per-sample scores so each
/// pair costs O(1); the feature sums are formed once per row block.
fn ranking_grad_sum(theta: &[f64], d: &Dataset) -> Vec<f64> {
    let n = d.len();
    let p = theta.len();
    let samples = d.samples();
    let s = ranking_scores(theta, d);
    blocked_reduce(
        n,
        ROW_BLOCK,
        |rows| {
            let mut col = vec![0.0; n];
            let mut acc = vec![0.0; p];
            for i in rows {
                let mut row = 0.0;
                for j in (0..n).filter(|&j| j != i) {
                    let dy = samples[i].y - samples[j].y;
                    if dy == 0.0 {
                        continue;
                    }
                    let c = phi_prime(dy * (s[i] - s[j])) * dy;
                    row += c;
                    col[j] += c;
                }
                for (a, x) in acc.iter_mut().zip(&samples[i].x) {
                    *a += row * x;
                }
            }
            for (j, cj) in col.iter().enumerate() {
                if *cj != 0.0 {
                    for (a, x) in acc.iter_mut().zip(&samples[j].x) {
                        *a -= cj * x;
                    }
                }
            }
            acc
        },
        add_vec,
    )
    .expect("n ≥ 2")
}

/// Risk and gradient from one sweep over the pairs.
pub fn empirical_risk_and_grad(loss: &PairwiseLoss, theta: &[f64], d: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_inputs(loss, theta, d)?;
    let n = d.len();
    let p = theta.len();
    let samples = d.samples();
    let (value, mut g) = if loss.kind() == LossKind::BipartiteRanking {
        let s = ranking_scores(theta, d);
        blocked_reduce(
            n,
            ROW_BLOCK,
            |rows| {
                let mut col = vec![0.0; n];
                let mut acc = vec![0.0; p];
                let mut value = 0.0;
                for i in rows {
                    let mut row = 0.0;
                    for j in (0..n).filter(|&j| j != i) {
                        let dy = samples[i].y - samples[j].y;
                        let u = dy * (s[i] - s[j]);
                        value += phi(u);
                        if dy == 0.0 {
                            continue;
                        }
                        let c = phi_prime(u) * dy;
                        row += c;
                        col[j] += c;
                    }
                    for (a, x) in acc.iter_mut().zip(&samples[i].x) {
                        *a += row * x;
                    }
                }
                for (j, cj) in col.iter().enumerate() {
                    if *cj != 0.0 {
                        for (a, x) in acc.iter_mut().zip(&samples[j].x) {
                            *a -= cj * x;
                        }
                    }
                }
                (value, acc)
            },
            |(va, ga), (vb, gb)| (va + vb, add_vec(ga, gb)),
        )
    } else {
        blocked_reduce(
            n,
            ROW_BLOCK,
            |rows| {
                let mut acc = vec![0.0; p];
                let mut value = 0.0;
                for i in rows {
                    for j in (0..n).filter(|&j| j != i) {
                        value += loss.data_value(theta, &samples[i], &samples[j]);
                        loss.add_data_grad(theta, &samples[i], &samples[j], 1.0, &mut acc);
                    }
                }
                (value, acc)
            },
            |(va, ga), (vb, gb)| (va + vb, add_vec(ga, gb)),
        )
    }
    .expect("n ≥ 2");
    let scale = 1.0 / (n * (n - 1)) as f64;
    let two_lambda = 2.0 * loss.lambda();
    for (gi, t) in g.iter_mut().zip(theta) {
        *gi = *gi * scale + two_lambda * t;
    }
    Ok((value * scale + loss.regularizer(theta), g))
}

/// Hessian of the empirical risk.
pub fn empirical_risk_hessian(loss: &PairwiseLoss, theta: &[f64], d: &Dataset) -> Result<Matrix> {
    check_inputs(loss, theta, d)?;
    let n = d.len();
    let p = theta.len();
    let samples = d.samples();
    let mut h = blocked_reduce(
        n,
        ROW_BLOCK,
        |rows| {
            let mut acc = Matrix::zeros(p);
            for i in rows {
                for j in (0..n).filter(|&j| j != i) {
                    loss.add_data_hessian(theta, &samples[i], &samples[j], 1.0, &mut acc);
                }
            }
            acc
        },
        |mut a, b| {
            a.add_scaled(1.0, &b);
            a
        },
    )
    .expect("n ≥ 2");
    h.scale(1.0 / (n * (n - 1)) as f64);
    h.add_diagonal(2.0 * loss.lambda());
    Ok(h)
}

/// Source of i.i.d. pairs for population-risk estimates.
#[derive(Debug, Clone, Copy)]
pub enum PairSampler<'a> {
    /// Both members drawn independently from the distribution.
    Distribution(&'a SyntheticDistribution),
    /// Both members drawn uniformly with replacement from a holdout set;
    /// an index pair with `i == j` is redrawn, since it is not a pair of
    /// distinct records.
    Holdout(&'a Dataset),
}

impl PairSampler<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Sample, Sample) {
        match self {
            PairSampler::Distribution(dist) => (dist.draw(rng), dist.draw(rng)),
            PairSampler::Holdout(d) => {
                let n = d.len();
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n);
                while j == i {
                    j = rng.random_range(0..n);
                }
                (d.sample(i).clone(), d.sample(j).clone())
            }
        }
    }
}

/// Mean with standard error `sample_std / √m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.count == 0 {
            return o;
        }
        if o.count == 0 {
            return self;
        }
        let count = self.count + o.count;
        let delta = o.mean - self.mean;
        let mean = self.mean + delta * o.count as f64 / count as f64;
        let m2 = self.m2 + o.m2 + delta * delta * (self.count as f64 * o.count as f64) / count as f64;
        Moments { count, mean, m2 }
    }

    fn estimate(&self) -> McEstimate {
        let var = if self.count > 1 {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            mean: self.mean,
            std_err: (var / self.count as f64).sqrt(),
            pairs: self.count,
        }
    }
}

const EMPTY: Moments = Moments {
    count: 0,
    mean: 0.0,
    m2: 0.0,
};

/// Evaluates several parameter vectors on the same `m` random pairs. Returns
/// one estimate per vector plus, for each vector after the first, the paired
/// difference against the first.
fn mc_common_pairs(
    loss: &PairwiseLoss,
    thetas: &[&[f64]],
    sampler: PairSampler<'_>,
    m: usize,
    seed: u64,
) -> Result<(Vec<McEstimate>, Vec<McEstimate>)> {
    if m == 0 {
        return Err(invalid("Monte-Carlo pair count m must be ≥ 1"));
    }
    if let PairSampler::Holdout(d) = sampler {
        if d.len() < 2 {
            return Err(invalid("holdout sampler needs at least two samples"));
        }
    }
    let k = thetas.len();
    let chunks = m.div_ceil(MC_CHUNK);
    let (values, diffs) = blocked_reduce(
        chunks,
        1,
        |c| {
            let c = c.start;
            let mut rng = stream_rng(derive_seed(seed, &[c as u64]), streams::MONTE_CARLO);
            let len = MC_CHUNK.min(m - c * MC_CHUNK);
            let mut vals = vec![EMPTY; k];
            let mut diffs = vec![EMPTY; k.saturating_sub(1)];
            let mut row = vec![0.0; k];
            for _ in 0..len {
                let (a, b) = sampler.draw(&mut rng);
                for (r, th) in row.iter_mut().zip(thetas) {
                    *r = loss.value_unchecked(th, &a, &b);
                }
                for (acc, v) in vals.iter_mut().zip(&row) {
                    acc.push(*v);
                }
                for (acc, v) in diffs.iter_mut().zip(&row[1..]) {
                    acc.push(v - row[0]);
                }
            }
            (vals, diffs)
        },
        |(va, da), (vb, db)| {
            (
                va.into_iter().zip(vb).map(|(a, b)| a.merge(b)).collect(),
                da.into_iter().zip(db).map(|(a, b)| a.merge(b)).collect(),
            )
        },
    )
    .expect("m ≥ 1");
    Ok((
        values.iter().map(Moments::estimate).collect(),
        diffs.iter().map(Moments::estimate).collect(),
    ))
}

/// Monte-Carlo estimate of `L_P(θ) = E_{z,z′∼P} ℓ(θ; z, z′)` from `m` pairs.
pub fn population_risk_mc(
    loss: &PairwiseLoss,
    theta: &[f64],
    sampler: PairSampler<'_>,
    m: usize,
    seed: u64,
) -> Result<McEstimate> {
    let dim = match sampler {
        PairSampler::Distribution(dist) => dist.dim,
        PairSampler::Holdout(d) => d.dim(),
    };
    let expected = loss.param_len(dim);
    if theta.len() != expected {
        return Err(Error::Layout {
            expected,
            got: theta.len(),
        });
    }
    Ok(mc_common_pairs(loss, &[theta], sampler, m, seed)?.0[0])
}

/// Three-term split of the excess population risk:
/// generalization error + excess empirical risk + approximation gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    /// `L̂_P(θ_priv) − L(θ_priv; D)`
    pub generalization_error: f64,
    /// `L(θ_priv; D) − L(θ*; D)`
    pub excess_empirical_risk: f64,
    /// `L(θ*; D) − L̂_P(θ_ref)`
    pub approximation_gap: f64,
    pub total: f64,
    /// Standard error of `total` from the paired Monte-Carlo differences.
    pub total_std_err: f64,
    pub population_priv: McEstimate,
    pub population_reference: McEstimate,
}

impl RiskDecomposition {
    fn from_terms(
        generalization_error: f64,
        excess_empirical_risk: f64,
        approximation_gap: f64,
        total_std_err: f64,
        population_priv: McEstimate,
        population_reference: McEstimate,
    ) -> Self {
        Self {
            generalization_error,
            excess_empirical_risk,
            approximation_gap,
            total: generalization_error + excess_empirical_risk + approximation_gap,
            total_std_err,
            population_priv,
            population_reference,
        }
    }
}

/// Everything the decomposition needs besides the sampler.
#[derive(Debug, Clone, Copy)]
pub struct ExcessRiskInputs<'a> {
    pub loss: &'a PairwiseLoss,
    pub dataset: &'a Dataset,
    pub theta_priv: &'a [f64],
    /// Non-private minimizer of the empirical risk on `dataset`.
    pub theta_star: &'a [f64],
    /// Stand-in for the population minimizer.
    pub reference_theta: &'a [f64],
}

/// Estimates `L_P(θ_priv) − L_P(θ_ref)` and splits it into the three terms.
/// Both population risks use the same `m` pairs, so their difference carries
/// the paired standard error.
pub fn excess_population_risk(
    inputs: ExcessRiskInputs<'_>,
    sampler: PairSampler<'_>,
    m: usize,
    seed: u64,
) -> Result<RiskDecomposition> {
    let ExcessRiskInputs {
        loss,
        dataset,
        theta_priv,
        theta_star,
        reference_theta,
    } = inputs;
    let (vals, diffs) = mc_common_pairs(loss, &[reference_theta, theta_priv], sampler, m, seed)?;
    let emp_priv = empirical_risk(loss, theta_priv, dataset)?;
    let emp_star = empirical_risk(loss, theta_star, dataset)?;
    Ok(RiskDecomposition::from_terms(
        vals[1].mean - emp_priv,
        emp_priv - emp_star,
        emp_star - vals[0].mean,
        diffs[0].std_err,
        vals[1],
        vals[0],
    ))
}

/// Pairs of records from a reference sample: an incomplete U-statistic
/// standing in for the population risk when minimizing it directly.
#[derive(Debug, Clone)]
pub struct PairSet {
    samples: Vec<Sample>,
    pairs: Vec<(u32, u32)>,
}

impl PairSet {
    /// Draws `size` records from `dist` and `pairs` ordered pairs of
    /// distinct records, uniformly with replacement.
    pub fn sample(dist: &SyntheticDistribution, size: usize, pairs: usize, seed: u64) -> Result<Self> {
        if size < 2 || size > u32::MAX as usize {
            return Err(invalid(format!("reference sample size must be in 2..=2^32-1, got {size}")));
        }
        if pairs == 0 {
            return Err(invalid("reference pair count must be ≥ 1"));
        }
        let mut rng = stream_rng(seed, streams::REFERENCE);
        let samples: Vec<Sample> = (0..size).map(|_| dist.draw(&mut rng)).collect();
        let pairs = (0..pairs)
            .map(|_| {
                let a = rng.random_range(0..size);
                let mut b = rng.random_range(0..size);
                while b == a {
                    b = rng.random_range(0..size);
                }
                (a as u32, b as u32)
            })
            .collect();
        Ok(Self { samples, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Mean loss over the pairs and its gradient, regularizer included.
    pub fn risk_and_grad(&self, loss: &PairwiseLoss, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = loss.param_len(self.samples[0].dim());
        if theta.len() != p {
            return Err(Error::Layout {
                expected: p,
                got: theta.len(),
            });
        }
        let m = self.pairs.len();
        let (v, mut g) = blocked_reduce(
            m,
            MC_CHUNK,
            |r| {
                let mut v = 0.0;
                let mut g = vec![0.0; p];
                for &(a, b) in &self.pairs[r] {
                    let (za, zb) = (&self.samples[a as usize], &self.samples[b as usize]);
                    v += loss.data_value(theta, za, zb);
                    loss.add_data_grad(theta, za, zb, 1.0, &mut g);
                }
                (v, g)
            },
            |(va, ga), (vb, gb)| (va + vb, add_vec(ga, gb)),
        )
        .expect("pair set is non-empty");
        let scale = 1.0 / m as f64;
        for (gi, t) in g.iter_mut().zip(theta) {
            *gi = *gi * scale + 2.0 * loss.lambda() * t;
        }
        Ok((v * scale + loss.regularizer(theta), g))
    }
}

/// Minimizer of a [`PairSet`] risk, used as the reference model when
/// measuring excess population risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub sample_size: usize,
    pub pairs: usize,
}

pub fn reference_minimizer(loss: &PairwiseLoss, set: &PairSet, cfg: &SolverConfig) -> Result<ReferenceModel> {
    let p = loss.param_len(set.samples[0].dim());
    let eta = cfg.eta.unwrap_or(1.0 / loss.constants().l);
    let (theta, value, grad_norm, iterations, converged) =
        minimize_with(|th| set.risk_and_grad(loss, th), &vec![0.0; p], eta, cfg)?;
    if !converged {
        return Err(Error::NotConverged {
            grad_norm,
            iterations,
            tol: cfg.tol,
        });
    }
    Ok(ReferenceModel {
        theta,
        value,
        grad_norm,
        iterations,
        sample_size: set.sample_count(),
        pairs: set.len(),
    })
}

/// Probe grid for the PL check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlProbe {
    pub count: usize,
    pub radius: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlReport {
    pub mu: f64,
    pub probes: usize,
    pub violations: usize,
    /// Minimum of `‖∇L‖² / (2μ(L − L_min))` over probes with `L > L_min`.
    pub worst_ratio: f64,
    pub l_min: f64,
    pub minimizer_grad_norm: f64,
}

/// Gradient-norm tolerance used to locate `L_min`.
pub const PL_MINIMIZER_TOL: f64 = 1e-10;

/// Checks `‖∇L(θ;D)‖² ≥ 2μ(L(θ;D) − L_min)` at random points of a ball.
pub fn pl_check(loss: &PairwiseLoss, d: &Dataset, mu: f64, probe: PlProbe) -> Result<PlReport> {
    if !(mu > 0.0) {
        return Err(invalid(format!("PL parameter must be positive, got {mu}")));
    }
    if probe.count == 0 || !(probe.radius > 0.0) {
        return Err(invalid("probe needs count ≥ 1 and a positive radius"));
    }
    let p = loss.param_len(d.dim());
    let cfg = SolverConfig {
        tol: PL_MINIMIZER_TOL,
        max_iter: 200_000,
        eta: None,
    };
    let sol = exact_minimize(loss, d, &cfg, &vec![0.0; p])?;
    if !sol.converged {
        return Err(Error::NotConverged {
            grad_norm: sol.grad_norm,
            iterations: sol.iterations,
            tol: cfg.tol,
        });
    }
    let l_min = empirical_risk(loss, &sol.theta, d)?;
    let mut rng = stream_rng(probe.seed, streams::PROBE);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..probe.count {
        let theta = uniform_ball(&mut rng, p, probe.radius);
        let gap = empirical_risk(loss, &theta, d)? - l_min;
        let g = norm2(&empirical_risk_grad(loss, &theta, d)?);
        // gaps at rounding level carry no information about the inequality
        if gap <= 1e-13 * l_min.abs().max(1.0) {
            continue;
        }
        let ratio = g * g / (2.0 * mu * gap);
        worst = worst.min(ratio);
        if ratio < 1.0 {
            violations += 1;
        }
    }
    Ok(PlReport {
        mu,
        probes: probe.count,
        violations,
        worst_ratio: worst,
        l_min,
        minimizer_grad_norm: sol.grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, Bounds, Layout, SyntheticKind};
    use crate::linalg::Matrix;
    use crate::losses::{ConstantSource, CustomPairLoss, LossConstants};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    /// Zero data term: the objective is the regularizer alone.
    struct Nothing;

    impl CustomPairLoss for Nothing {
        fn layout(&self, d: usize) -> Layout {
            Layout::Vector(d)
        }
        fn value(&self, _: &[f64], _: &Sample, _: &Sample) -> f64 {
            0.0
        }
        fn grad(&self, theta: &[f64], _: &Sample, _: &Sample) -> Vec<f64> {
            vec![0.0; theta.len()]
        }
        fn hessian(&self, theta: &[f64], _: &Sample, _: &Sample) -> Matrix {
            Matrix::zeros(theta.len())
        }
    }

    fn pure_regularizer(lambda: f64) -> PairwiseLoss {
        let c = LossConstants::new(1.0, 2.0 * lambda + 1.0, lambda, 1.0, ConstantSource::User).unwrap();
        PairwiseLoss::custom(Arc::new(Nothing), lambda, c).unwrap()
    }

    fn brute(loss: &PairwiseLoss, theta: &[f64], d: &Dataset) -> f64 {
        let n = d.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += loss.value(theta, d.sample(i), d.sample(j)).unwrap();
                }
            }
        }
        s / (n * (n - 1)) as f64
    }

    #[test]
    fn risk_at_zero_is_log2() {
        let loss = PairwiseLoss::ranking(0.0).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 17, 3, 4).unwrap();
        assert_relative_eq!(empirical_risk(&loss, &[0.0; 3], &d).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn two_sample_risk_is_two_term_average() {
        let loss = PairwiseLoss::metric(0.05).unwrap();
        let d = gen_synthetic(SyntheticKind::Metric, 2, 2, 4).unwrap();
        let th = [0.3, -0.1, 0.2, 0.4];
        let want = (loss.value(&th, d.sample(0), d.sample(1)).unwrap() + loss.value(&th, d.sample(1), d.sample(0)).unwrap()) / 2.0;
        assert_relative_eq!(empirical_risk(&loss, &th, &d).unwrap(), want, epsilon = 1e-15);
    }

    #[test]
    fn risk_matches_double_loop() {
        let d = gen_synthetic(SyntheticKind::Ranking, 30, 4, 11).unwrap();
        for loss in [PairwiseLoss::ranking(0.0).unwrap(), PairwiseLoss::ranking(0.2).unwrap()] {
            let th = [0.3, -0.5, 0.1, 0.2];
            let got = empirical_risk(&loss, &th, &d).unwrap();
            assert!((got - brute(&loss, &th, &d)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_features_give_zero_gradient() {
        let loss = PairwiseLoss::ranking(0.0).unwrap();
        let samples = (0..6).map(|k| Sample::new(vec![0.1, 0.2], k as f64 / 10.0 - 0.3)).collect();
        let d = Dataset::new(samples, Bounds::UNIT).unwrap();
        let g = empirical_risk_grad(&loss, &[0.0, 0.0], &d).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-16), "{g:?}");
    }

    #[test]
    fn fast_ranking_gradient_matches_pairwise_sum() {
        let loss = PairwiseLoss::ranking(0.1).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 37, 3, 2).unwrap();
        let th = [0.4, -0.2, 0.7];
        let fast = empirical_risk_grad(&loss, &th, &d).unwrap();
        let mut slow = vec![0.0; 3];
        for (i, j) in d.pairs() {
            let g = loss.grad(&th, d.sample(i), d.sample(j)).unwrap();
            slow.iter_mut().zip(g).for_each(|(a, b)| *a += b / (37.0 * 36.0));
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn fused_pass_matches_separate_calls() {
        let d = gen_synthetic(SyntheticKind::Metric, 13, 2, 2).unwrap();
        let loss = PairwiseLoss::metric(0.05).unwrap();
        let th = [0.1, -0.3, 0.2, 0.4];
        let (v, g) = empirical_risk_and_grad(&loss, &th, &d).unwrap();
        assert!((v - empirical_risk(&loss, &th, &d).unwrap()).abs() < 1e-15);
        let g2 = empirical_risk_grad(&loss, &th, &d).unwrap();
        assert!(g.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-15));

        let d = gen_synthetic(SyntheticKind::Ranking, 21, 3, 2).unwrap();
        let loss = PairwiseLoss::ranking(0.05).unwrap();
        let th = [0.1, -0.3, 0.2];
        let (v, g) = empirical_risk_and_grad(&loss, &th, &d).unwrap();
        assert!((v - empirical_risk(&loss, &th, &d).unwrap()).abs() < 1e-15);
        let g2 = empirical_risk_grad(&loss, &th, &d).unwrap();
        assert!(g.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn layout_errors() {
        let loss = PairwiseLoss::metric(0.0).unwrap();
        let d = gen_synthetic(SyntheticKind::Metric, 5, 2, 0).unwrap();
        assert!(matches!(empirical_risk(&loss, &[0.0; 2], &d), Err(Error::Layout { .. })));
    }

    #[test]
    fn mc_of_constant_integrand_is_exact() {
        let loss = PairwiseLoss::ranking(0.0).unwrap();
        let dist = SyntheticDistribution::new(SyntheticKind::Ranking, 3, 0).unwrap();
        let est = population_risk_mc(&loss, &[0.0; 3], PairSampler::Distribution(&dist), 5000, 1).unwrap();
        assert_eq!(est.mean, std::f64::consts::LN_2);
        assert_eq!(est.std_err, 0.0);
        let reg = pure_regularizer(0.5);
        let est = population_risk_mc(&reg, &[1.0, 0.0, 0.0], PairSampler::Distribution(&dist), 100, 1).unwrap();
        assert_eq!(est.mean, 0.5);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn mc_is_seed_deterministic_and_holdout_works() {
        let loss = PairwiseLoss::ranking(0.0).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 40, 3, 9).unwrap();
        let th = [0.5, 0.5, -0.2];
        let a = population_risk_mc(&loss, &th, PairSampler::Holdout(&d), 10_000, 3).unwrap();
        let b = population_risk_mc(&loss, &th, PairSampler::Holdout(&d), 10_000, 3).unwrap();
        assert_eq!(a, b);
        assert!((a.mean - empirical_risk(&loss, &th, &d).unwrap()).abs() < 4.0 * a.std_err);
        assert!(population_risk_mc(&loss, &th, PairSampler::Holdout(&d), 0, 3).is_err());
    }

    #[test]
    fn decomposition_sums_to_total() {
        let loss = PairwiseLoss::ranking(0.1).unwrap();
        let dist = SyntheticDistribution::new(SyntheticKind::Ranking, 3, 5).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 20, 3, 5).unwrap();
        let inputs = ExcessRiskInputs {
            loss: &loss,
            dataset: &d,
            theta_priv: &[0.3, 0.1, -0.4],
            theta_star: &[0.2, 0.1, 0.0],
            reference_theta: &[0.25, 0.05, 0.02],
        };
        let r = excess_population_risk(inputs, PairSampler::Distribution(&dist), 20_000, 2).unwrap();
        let sum = r.generalization_error + r.excess_empirical_risk + r.approximation_gap;
        assert!((r.total - sum).abs() <= 1e-12);
        let direct = r.population_priv.mean - r.population_reference.mean;
        assert!((r.total - direct).abs() < 1e-12);
    }

    #[test]
    fn identical_models_have_zero_excess() {
        let loss = PairwiseLoss::ranking(0.1).unwrap();
        let dist = SyntheticDistribution::new(SyntheticKind::Ranking, 3, 5).unwrap();
        let d = gen_synthetic(SyntheticKind::Ranking, 20, 3, 5).unwrap();
        let th = [0.3, 0.1, -0.4];
        let inputs = ExcessRiskInputs {
            loss: &loss,
            dataset: &d,
            theta_priv: &th,
            theta_star: &th,
            reference_theta: &th,
        };
        let r = excess_population_risk(inputs, PairSampler::Distribution(&dist), 1000, 2).unwrap();
        assert!(r.total.abs() <= 3.0 * r.total_std_err + 1e-15);
    }

    #[test]
    fn pl_check_on_pure_regularizer() {
        let d = gen_synthetic(SyntheticKind::Ranking, 5, 3, 0).unwrap();
        let lambda = 0.2;
        let loss = pure_regularizer(lambda);
        let probe = PlProbe {
            count: 50,
            radius: 1.0,
            seed: 3,
        };
        let ok = pl_check(&loss, &d, lambda, probe).unwrap();
        assert_eq!(ok.violations, 0);
        assert_relative_eq!(ok.worst_ratio, 2.0, epsilon = 1e-9);
        let bad = pl_check(&loss, &d, 3.0 * lambda, probe).unwrap();
        assert_eq!(bad.violations, 50);
        assert_relative_eq!(bad.worst_ratio, 2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn pair_set_gradient_matches_finite_differences() {
        let loss = PairwiseLoss::ranking(0.1).unwrap();
        let dist = SyntheticDistribution::new(crate::data::SyntheticKind::Ranking, 3, 4).unwrap();
        let set = PairSet::sample(&dist, 50, 300, 9).unwrap();
        let th = [0.3, -0.5, 0.2];
        let (_, g) = set.risk_and_grad(&loss, &th).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let mut a = th;
            let mut b = th;
            a[k] += h;
            b[k] -= h;
            let fd = (set.risk_and_grad(&loss, &a).unwrap().0 - set.risk_and_grad(&loss, &b).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
        let r = reference_minimizer(&loss, &set, &SolverConfig::default()).unwrap();
        assert!(r.grad_norm <= 1e-10);
        assert_eq!((r.sample_size, r.pairs), (50, 300));
    }
}
