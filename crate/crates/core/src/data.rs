//! Samples, datasets, parameter vectors and the ordered pair index set.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2};
use crate::rng::{stream_rng, streams};

/// A labeled record `z = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Declared data bounds: `‖x‖₂ ≤ x_max`, `|y| ≤ y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_max: f64,
    pub y_max: f64,
}

impl Bounds {
    pub const UNIT: Bounds = Bounds {
        x_max: 1.0,
        y_max: 1.0,
    };

    pub fn is_unit(&self) -> bool {
        self.x_max == 1.0 && self.y_max == 1.0
    }

    fn check(&self, index: usize, s: &Sample) -> Result<()> {
        if let Some(k) = s.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Bounds {
                index,
                msg: format!("feature {k} is not finite"),
            });
        }
        if !s.y.is_finite() {
            return Err(Error::Bounds {
                index,
                msg: "label is not finite".into(),
            });
        }
        let nx = norm2(&s.x);
        if nx > self.x_max {
            return Err(Error::Bounds {
                index,
                msg: format!("‖x‖₂ = {nx} exceeds x_max = {}", self.x_max),
            });
        }
        if s.y.abs() > self.y_max {
            return Err(Error::Bounds {
                index,
                msg: format!("|y| = {} exceeds y_max = {}", s.y.abs(), self.y_max),
            });
        }
        Ok(())
    }
}

/// An immutable collection of at least two samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Sample>,
    bounds: Bounds,
    seed: Option<u64>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, bounds: Bounds) -> Result<Self> {
        Self::with_seed(samples, bounds, None)
    }

    pub fn with_seed(samples: Vec<Sample>, bounds: Bounds, seed: Option<u64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(invalid(format!(
                "a pairwise dataset needs n ≥ 2 samples, got {}",
                samples.len()
            )));
        }
        let d = samples[0].dim();
        if d == 0 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.dim() != d {
                return Err(Error::Bounds {
                    index: i,
                    msg: format!("expected {d} features, found {}", s.dim()),
                });
            }
            bounds.check(i, s)?;
        }
        Ok(Self {
            samples,
            bounds,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `D^{-i}`: the dataset with sample `i` removed.
    pub fn without(&self, i: usize) -> Result<Self> {
        if i >= self.len() {
            return Err(invalid(format!("index {i} out of range for n = {}", self.len())));
        }
        let mut samples = self.samples.clone();
        samples.remove(i);
        Self::with_seed(samples, self.bounds, self.seed)
    }

    /// The adjacent dataset with sample `i` replaced.
    pub fn replaced(&self, i: usize, sample: Sample) -> Result<Self> {
        if i >= self.len() {
            return Err(invalid(format!("index {i} out of range for n = {}", self.len())));
        }
        let mut samples = self.samples.clone();
        samples[i] = sample;
        Self::with_seed(samples, self.bounds, self.seed)
    }

    pub fn pairs(&self) -> PairStream {
        PairStream::new(self.len())
    }

    /// Writes the CSV format `x0,...,x{d-1},y` with shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        for k in 0..d {
            let _ = write!(out, "x{k},");
        }
        out.push_str("y\n");
        for s in &self.samples {
            for v in &s.x {
                let _ = write!(out, "{v:?},");
            }
            let _ = writeln!(out, "{:?}", s.y);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Dimension and bound declaration used when ingesting a CSV file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptor {
    pub dim: usize,
    pub bounds: Bounds,
}

pub fn load_dataset(path: impl AsRef<Path>, descriptor: Descriptor) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_csv(&text, descriptor).map_err(|e| match e {
        Error::Parse { row, msg, .. } => Error::Parse {
            path: path.to_path_buf(),
            row,
            msg,
        },
        other => other,
    })
}

pub fn parse_csv(text: &str, descriptor: Descriptor) -> Result<Dataset> {
    let d = descriptor.dim;
    let perr = |row: usize, msg: String| Error::Parse {
        path: "<memory>".into(),
        row,
        msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| perr(0, "missing header".into()))?;
    let expected: Vec<String> = (0..d).map(|k| format!("x{k}")).chain(["y".to_string()]).collect();
    let got: Vec<&str> = header.split(',').map(str::trim).collect();
    if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(perr(0, format!("header must be {}", expected.join(","))));
    }

    let mut samples = Vec::new();
    for (row, line) in lines.enumerate().map(|(k, l)| (k + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(perr(row, format!("expected {} columns, found {}", d + 1, fields.len())));
        }
        let mut vals = Vec::with_capacity(d + 1);
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| perr(row, format!("column {col}: cannot parse {f:?}")))?;
            if !v.is_finite() {
                return Err(perr(row, format!("column {col}: non-finite value {f:?}")));
            }
            vals.push(v);
        }
        let y = vals.pop().expect("d + 1 columns");
        samples.push(Sample::new(vals, y));
    }
    Dataset::new(samples, descriptor.bounds)
}

/// Which worked example a synthetic dataset is shaped for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Ranking,
    Metric,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranking" => Ok(Self::Ranking),
            "metric" => Ok(Self::Metric),
            other => Err(invalid(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

/// Standard deviation of the label noise added before clamping ranking labels.
pub const RANKING_LABEL_NOISE: f64 = 0.1;

/// A fixed data-generating distribution: features uniform in the unit ball,
/// labels driven by a hidden unit direction `w*`.
///
/// Ranking: `y = clamp(w*ᵀx + 0.1·N(0,1), -1, 1)`. Metric: `y = sign(w*ᵀx)`
/// with `sign(0) = +1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDistribution {
    pub kind: SyntheticKind,
    pub dim: usize,
    pub direction: Vec<f64>,
}

impl SyntheticDistribution {
    pub fn new(kind: SyntheticKind, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension d must be at least 1"));
        }
        let mut rng = stream_rng(seed, streams::DISTRIBUTION);
        let direction = unit_direction(&mut rng, dim);
        Ok(Self {
            kind,
            dim,
            direction,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let x = uniform_ball(rng, self.dim, 1.0);
        let score = dot(&self.direction, &x);
        let y = match self.kind {
            SyntheticKind::Ranking => {
                let noise: f64 = rng.sample(StandardNormal);
                (score + RANKING_LABEL_NOISE * noise).clamp(-1.0, 1.0)
            }
            SyntheticKind::Metric => {
                if score >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        Sample::new(x, y)
    }

    pub fn dataset<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, seed: Option<u64>) -> Result<Dataset> {
        if n < 2 {
            return Err(invalid(format!("n must be at least 2, got {n}")));
        }
        let samples = (0..n).map(|_| self.draw(rng)).collect();
        Dataset::with_seed(samples, Bounds::UNIT, seed)
    }

    /// A boundary point that contradicts the hidden trend: `x = -w*`, `y = +1`.
    pub fn outlier(&self) -> Sample {
        Sample::new(self.direction.iter().map(|v| -v).collect(), 1.0)
    }
}

/// Deterministic synthetic dataset: `(kind, n, d, seed)` fixes both the
/// hidden direction and the samples.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    let dist = SyntheticDistribution::new(kind, d, seed)?;
    let mut rng = stream_rng(seed, streams::SAMPLES);
    dist.dataset(n, &mut rng, Some(seed))
}

fn unit_direction<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nv = norm2(&v);
        if nv > 1e-12 {
            return v.into_iter().map(|c| c / nv).collect();
        }
    }
}

/// Uniform draw from the closed ball of the given radius.
pub fn uniform_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    let dir = unit_direction(rng, d);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    let mut x: Vec<f64> = dir.into_iter().map(|c| c * r).collect();
    // rounding can push the norm a few ulps past the radius
    while norm2(&x) > radius {
        x.iter_mut().for_each(|c| *c *= 1.0 - f64::EPSILON);
    }
    x
}

/// How a flat parameter vector is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layout", content = "d", rename_all = "snake_case")]
pub enum Layout {
    /// `θ ∈ ℝ^d` (ranking).
    Vector(usize),
    /// `θ ∈ ℝ^{d×d}` stored row-major (metric learning).
    SquareMatrix(usize),
}

impl Layout {
    pub fn len(&self) -> usize {
        match *self {
            Layout::Vector(d) => d,
            Layout::SquareMatrix(d) => d * d,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        match *self {
            Layout::Vector(d) | Layout::SquareMatrix(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub layout: Layout,
}

impl ModelParams {
    pub fn new(theta: Vec<f64>, layout: Layout) -> Result<Self> {
        if theta.len() != layout.len() {
            return Err(Error::Layout {
                expected: layout.len(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(invalid("parameter vector has non-finite entries"));
        }
        Ok(Self { theta, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            theta: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.theta)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }
}

/// Ordered pairs `(i, j)`, `i ≠ j`, in row-major order: `i` ascending, then
/// `j` ascending with `j = i` skipped.
#[derive(Debug, Clone)]
pub struct PairStream {
    n: usize,
    i: usize,
    j: usize,
    remaining: usize,
}

impl PairStream {
    pub fn new(n: usize) -> Self {
        let mut s = Self {
            n,
            i: 0,
            j: 0,
            remaining: n * n.saturating_sub(1),
        };
        s.skip_diagonal();
        s
    }

    fn skip_diagonal(&mut self) {
        if self.i < self.n && self.j == self.i {
            self.j += 1;
        }
        if self.j >= self.n {
            self.i += 1;
            self.j = 0;
            if self.i < self.n && self.j == self.i {
                self.j += 1;
            }
        }
    }
}

impl Iterator for PairStream {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        if self.remaining == 0 {
            return None;
        }
        let item = (self.i, self.j);
        self.remaining -= 1;
        self.j += 1;
        self.skip_diagonal();
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for PairStream {}

pub fn pair_stream(d: &Dataset) -> PairStream {
    d.pairs()
}
