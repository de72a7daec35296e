//! Pairwise loss families `ℓ(θ; z, z′)` with analytic derivatives.
//!
//! Both built-in families compose the logistic surrogate
//! `φ(u) = log(1 + e^{-u})` with a score that is linear in θ:
//!
//! * bipartite ranking: `u = (y − y′)·θᵀ(x − x′)`, θ ∈ ℝ^d;
//! * metric learning: `u = y·y′·(1 − (x − x′)ᵀ θ (x − x′))`, θ ∈ ℝ^{d×d}
//!   flattened row-major.
//!
//! An optional `λ‖θ‖₂²` term is added to every pair.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Bounds, Layout, Sample};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Matrix};

/// `φ(u) = log(1 + e^{-u})`, evaluated without overflow.
pub fn phi(u: f64) -> f64 {
    if u >= 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

/// `φ′(u) = −1 / (1 + e^{u})`
pub fn phi_prime(u: f64) -> f64 {
    if u >= 0.0 {
        let e = (-u).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + u.exp())
    }
}

/// `φ″(u) = e^{-|u|} / (1 + e^{-|u|})²`
pub fn phi_second(u: f64) -> f64 {
    let e = (-u.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

fn sigmoid(u: f64) -> f64 {
    -phi_prime(-u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[serde(alias = "ranking")]
    BipartiteRanking,
    #[serde(alias = "metric")]
    MetricLearning,
    Custom,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranking" | "bipartite_ranking" => Ok(Self::BipartiteRanking),
            "metric" | "metric_learning" => Ok(Self::MetricLearning),
            other => Err(invalid(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Where a set of smoothness constants came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    /// The closed-form values quoted for the worked examples under unit bounds.
    Published,
    /// Supremum bounds derived from the loss formula over the declared data
    /// bounds and the parameter ball.
    WorstCase,
    /// Supplied by the caller.
    User,
}

impl std::str::FromStr for ConstantSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "published" => Ok(Self::Published),
            "worst_case" => Ok(Self::WorstCase),
            other => Err(invalid(format!("unknown constant source {other:?}"))),
        }
    }
}

/// Lipschitz constant `g`, smoothness `l`, PL parameter `mu` (0 when unknown)
/// and loss upper bound `m_ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConstants {
    pub g: f64,
    pub l: f64,
    pub mu: f64,
    pub m_ell: f64,
    pub source: ConstantSource,
}

impl LossConstants {
    pub fn new(g: f64, l: f64, mu: f64, m_ell: f64, source: ConstantSource) -> Result<Self> {
        if !(g > 0.0) || !(l > 0.0) {
            return Err(invalid(format!("constants need G > 0 and L > 0 (got G = {g}, L = {l})")));
        }
        if mu < 0.0 || (mu > 0.0 && mu >= l) {
            return Err(invalid(format!("PL parameter must satisfy 0 < mu < L (got mu = {mu}, L = {l})")));
        }
        if !(m_ell >= 0.0) {
            return Err(invalid(format!("loss bound must be non-negative (got {m_ell})")));
        }
        Ok(Self {
            g,
            l,
            mu,
            m_ell,
            source,
        })
    }
}

/// Published smoothness constants for ranking under `‖x‖₂ ≤ 1`, `|y| ≤ 1`.
pub const RANKING_PUBLISHED_G: f64 = 2.0;
pub fn ranking_published_l() -> f64 {
    let s = std::f64::consts::SQRT_2;
    (2.0 + 2.0 * s) / (3.0 + 2.0 * s)
}

/// Published smoothness constants for metric learning under `‖x‖₂ ≤ 1`.
pub const METRIC_PUBLISHED_G: f64 = 1.0;
pub fn metric_published_l() -> f64 {
    let s = std::f64::consts::SQRT_2;
    (1.0 + s) / (6.0 + 4.0 * s)
}

/// Largest attainable `|u|` for the φ argument, given data bounds and
/// parameter radius `r`.
pub fn max_phi_argument(kind: LossKind, bounds: Bounds, radius: f64) -> Result<f64> {
    match kind {
        // |y − y′|·‖x − x′‖·‖θ‖
        LossKind::BipartiteRanking => Ok(2.0 * bounds.y_max * 2.0 * bounds.x_max * radius),
        // |y y′|·|1 − M²| with |M²| ≤ ‖θ‖_F ‖x − x′‖²
        LossKind::MetricLearning => {
            let spread = 4.0 * bounds.x_max * bounds.x_max;
            Ok(bounds.y_max * bounds.y_max * (1.0 + radius * spread))
        }
        LossKind::Custom => Err(Error::UnsupportedBounds("custom losses".into())),
    }
}

/// Constants for the built-in families. Published values exist only for the
/// unit bounds; `mu` is set to `lambda` and regularized variants get
/// `G + 2λr`, `L + 2λ`, `M_ℓ + λr²`.
pub fn registered_constants(
    kind: LossKind,
    bounds: Bounds,
    lambda: f64,
    radius: f64,
    source: ConstantSource,
) -> Result<LossConstants> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite and ≥ 0, got {lambda}")));
    }
    if !(radius > 0.0) {
        return Err(invalid(format!("constraint radius must be positive, got {radius}")));
    }
    let u_max = max_phi_argument(kind, bounds, radius)?;
    let m_ell = phi(-u_max);
    let (g, l) = match (kind, source) {
        (LossKind::Custom, _) | (_, ConstantSource::User) => {
            return Err(Error::UnsupportedBounds(
                "custom losses must declare their own constants".into(),
            ))
        }
        (_, ConstantSource::Published) if !bounds.is_unit() => {
            return Err(Error::UnsupportedBounds(format!(
                "published constants for {kind:?} assume ‖x‖₂ ≤ 1, |y| ≤ 1 (got {bounds:?})"
            )))
        }
        (LossKind::BipartiteRanking, ConstantSource::Published) => (RANKING_PUBLISHED_G, ranking_published_l()),
        (LossKind::MetricLearning, ConstantSource::Published) => (METRIC_PUBLISHED_G, metric_published_l()),
        (LossKind::BipartiteRanking, ConstantSource::WorstCase) => {
            let a = 4.0 * bounds.x_max * bounds.y_max;
            (a * sigmoid(u_max), a * a / 4.0)
        }
        (LossKind::MetricLearning, ConstantSource::WorstCase) => {
            let b = 4.0 * bounds.x_max * bounds.x_max * bounds.y_max * bounds.y_max;
            (b * sigmoid(u_max), b * b / 4.0)
        }
    };
    LossConstants::new(
        g + 2.0 * lambda * radius,
        l + 2.0 * lambda,
        lambda,
        m_ell + lambda * radius * radius,
        source,
    )
}

/// Plug-in point for a user-defined pairwise loss. The regularizer is handled
/// by [`PairwiseLoss`] and must not be included here.
pub trait CustomPairLoss: Send + Sync {
    fn layout(&self, feature_dim: usize) -> Layout;
    fn value(&self, theta: &[f64], z: &Sample, z2: &Sample) -> f64;
    fn grad(&self, theta: &[f64], z: &Sample, z2: &Sample) -> Vec<f64>;
    fn hessian(&self, theta: &[f64], z: &Sample, z2: &Sample) -> Matrix;
}

#[derive(Clone)]
enum Family {
    Ranking,
    Metric,
    Custom(Arc<dyn CustomPairLoss>),
}

/// A pairwise loss together with its regularization weight and constants.
#[derive(Clone)]
pub struct PairwiseLoss {
    family: Family,
    lambda: f64,
    constants: LossConstants,
}

impl fmt::Debug for PairwiseLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairwiseLoss")
            .field("kind", &self.kind())
            .field("lambda", &self.lambda)
            .field("constants", &self.constants)
            .finish()
    }
}

impl PairwiseLoss {
    /// Built-in family with registered constants on the parameter ball of `radius`.
    pub fn builtin(kind: LossKind, lambda: f64, bounds: Bounds, radius: f64, source: ConstantSource) -> Result<Self> {
        let constants = registered_constants(kind, bounds, lambda, radius, source)?;
        let family = match kind {
            LossKind::BipartiteRanking => Family::Ranking,
            LossKind::MetricLearning => Family::Metric,
            LossKind::Custom => unreachable!("registered_constants rejects custom kinds"),
        };
        Ok(Self {
            family,
            lambda,
            constants,
        })
    }

    pub fn ranking(lambda: f64) -> Result<Self> {
        Self::builtin(LossKind::BipartiteRanking, lambda, Bounds::UNIT, 1.0, ConstantSource::Published)
    }

    pub fn metric(lambda: f64) -> Result<Self> {
        Self::builtin(LossKind::MetricLearning, lambda, Bounds::UNIT, 1.0, ConstantSource::Published)
    }

    pub fn custom(loss: Arc<dyn CustomPairLoss>, lambda: f64, constants: LossConstants) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and ≥ 0, got {lambda}")));
        }
        Ok(Self {
            family: Family::Custom(loss),
            lambda,
            constants: LossConstants {
                source: ConstantSource::User,
                ..constants
            },
        })
    }

    pub fn kind(&self) -> LossKind {
        match self.family {
            Family::Ranking => LossKind::BipartiteRanking,
            Family::Metric => LossKind::MetricLearning,
            Family::Custom(_) => LossKind::Custom,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn constants(&self) -> &LossConstants {
        &self.constants
    }

    pub fn with_constants(mut self, constants: LossConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn layout(&self, feature_dim: usize) -> Layout {
        match &self.family {
            Family::Ranking => Layout::Vector(feature_dim),
            Family::Metric => Layout::SquareMatrix(feature_dim),
            Family::Custom(c) => c.layout(feature_dim),
        }
    }

    pub fn param_len(&self, feature_dim: usize) -> usize {
        self.layout(feature_dim).len()
    }

    pub(crate) fn check(&self, theta: &[f64], z: &Sample, z2: &Sample) -> Result<()> {
        if z.dim() != z2.dim() {
            return Err(invalid(format!(
                "samples have different dimensions ({} vs {})",
                z.dim(),
                z2.dim()
            )));
        }
        let expected = self.param_len(z.dim());
        if theta.len() != expected {
            return Err(Error::Layout {
                expected,
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// The φ argument for built-in families.
    fn argument(&self, theta: &[f64], z: &Sample, z2: &Sample) -> f64 {
        match self.family {
            Family::Ranking => {
                let s: f64 = theta.iter().zip(z.x.iter().zip(&z2.x)).map(|(t, (a, b))| t * (a - b)).sum();
                (z.y - z2.y) * s
            }
            Family::Metric => z.y * z2.y * (1.0 - mahalanobis_sq(theta, &z.x, &z2.x)),
            Family::Custom(_) => unreachable!(),
        }
    }

    pub fn value(&self, theta: &[f64], z: &Sample, z2: &Sample) -> Result<f64> {
        self.check(theta, z, z2)?;
        Ok(self.value_unchecked(theta, z, z2))
    }

    pub(crate) fn value_unchecked(&self, theta: &[f64], z: &Sample, z2: &Sample) -> f64 {
        self.data_value(theta, z, z2) + self.regularizer(theta)
    }

    /// Loss without the regularizer, no checks.
    pub(crate) fn data_value(&self, theta: &[f64], z: &Sample, z2: &Sample) -> f64 {
        match &self.family {
            Family::Custom(c) => c.value(theta, z, z2),
            _ => phi(self.argument(theta, z, z2)),
        }
    }

    pub fn regularizer(&self, theta: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * dot(theta, theta)
        }
    }

    pub fn grad(&self, theta: &[f64], z: &Sample, z2: &Sample) -> Result<Vec<f64>> {
        self.check(theta, z, z2)?;
        let mut out = vec![0.0; theta.len()];
        self.add_data_grad(theta, z, z2, 1.0, &mut out);
        for (o, t) in out.iter_mut().zip(theta) {
            *o += 2.0 * self.lambda * t;
        }
        Ok(out)
    }

    /// `out += scale · ∇θ(data term)`, no regularizer, no checks.
    pub(crate) fn add_data_grad(&self, theta: &[f64], z: &Sample, z2: &Sample, scale: f64, out: &mut [f64]) {
        match &self.family {
            Family::Ranking => {
                let dy = z.y - z2.y;
                if dy == 0.0 {
                    return;
                }
                let c = scale * phi_prime(self.argument(theta, z, z2)) * dy;
                for (o, (a, b)) in out.iter_mut().zip(z.x.iter().zip(&z2.x)) {
                    *o += c * (a - b);
                }
            }
            Family::Metric => {
                let yy = z.y * z2.y;
                let c = -scale * phi_prime(self.argument(theta, z, z2)) * yy;
                add_outer_flat(c, &z.x, &z2.x, out);
            }
            Family::Custom(f) => {
                let g = f.grad(theta, z, z2);
                for (o, v) in out.iter_mut().zip(g) {
                    *o += scale * v;
                }
            }
        }
    }

    pub fn hessian(&self, theta: &[f64], z: &Sample, z2: &Sample) -> Result<Matrix> {
        self.check(theta, z, z2)?;
        let mut h = Matrix::zeros(theta.len());
        self.add_data_hessian(theta, z, z2, 1.0, &mut h);
        h.add_diagonal(2.0 * self.lambda);
        Ok(h)
    }

    pub(crate) fn add_data_hessian(&self, theta: &[f64], z: &Sample, z2: &Sample, scale: f64, h: &mut Matrix) {
        match &self.family {
            Family::Ranking => {
                let dy = z.y - z2.y;
                if dy == 0.0 {
                    return;
                }
                let dx: Vec<f64> = z.x.iter().zip(&z2.x).map(|(a, b)| a - b).collect();
                let c = scale * phi_second(self.argument(theta, z, z2)) * dy * dy;
                h.add_outer(c, &dx, &dx);
            }
            Family::Metric => {
                let d = z.dim();
                let dx: Vec<f64> = z.x.iter().zip(&z2.x).map(|(a, b)| a - b).collect();
                let mut v = vec![0.0; d * d];
                for a in 0..d {
                    for b in 0..d {
                        v[a * d + b] = dx[a] * dx[b];
                    }
                }
                let yy = z.y * z2.y;
                let c = scale * phi_second(self.argument(theta, z, z2)) * yy * yy;
                h.add_outer(c, &v, &v);
            }
            Family::Custom(f) => h.add_scaled(scale, &f.hessian(theta, z, z2)),
        }
    }
}

/// `(x − x′)ᵀ θ (x − x′)` with θ stored row-major.
pub fn mahalanobis_sq(theta: &[f64], x: &[f64], x2: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for a in 0..d {
        let da = x[a] - x2[a];
        if da == 0.0 {
            continue;
        }
        let row = &theta[a * d..(a + 1) * d];
        let mut s = 0.0;
        for b in 0..d {
            s += row[b] * (x[b] - x2[b]);
        }
        acc += da * s;
    }
    acc
}

/// `out += c · vec((x − x′)(x − x′)ᵀ)`
fn add_outer_flat(c: f64, x: &[f64], x2: &[f64], out: &mut [f64]) {
    let d = x.len();
    for a in 0..d {
        let ca = c * (x[a] - x2[a]);
        if ca == 0.0 {
            continue;
        }
        for b in 0..d {
            out[a * d + b] += ca * (x[b] - x2[b]);
        }
    }
}
