//! Dense vector helpers and a small row-major matrix with a Cholesky solver.
//!
//! Parameter dimensions here are tiny (p ≤ a few dozen), so a hand-written
//! factorization whose pivots can be inspected is preferable to a general
//! linear-algebra dependency.

use serde::{Deserialize, Serialize};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `self += alpha * u vᵀ`
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        let n = self.n;
        for i in 0..n {
            let a = alpha * u[i];
            if a == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += a * vj;
            }
        }
    }

    pub fn add_diagonal(&mut self, alpha: f64) {
        for i in 0..self.n {
            self[(i, i)] += alpha;
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) {
        axpy(alpha, &other.data, &mut self.data);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute eigenvalue of a symmetric matrix (power iteration on
    /// `A²`, which is positive semidefinite and shares eigenvectors).
    pub fn spectral_norm_symmetric(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut lambda = 0.0;
        for _ in 0..1000 {
            let w = self.mul_vec(&self.mul_vec(&v));
            let nw = norm2(&w);
            if nw == 0.0 {
                return 0.0;
            }
            let next = nw / norm2(&v);
            v = w.into_iter().map(|c| c / nw).collect();
            if (next - lambda).abs() <= 1e-14 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, failing when any pivot is not strictly
    /// positive (relative to the largest diagonal entry).
    pub fn new(a: &Matrix) -> Option<Self> {
        let n = a.dim();
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut s = a[(j, j)];
            for k in 0..j {
                s -= l[(j, k)] * l[(j, k)];
            }
            if !(s > 1e-13 * scale) || !s.is_finite() {
                return None;
            }
            let pivot = s.sqrt();
            l[(j, j)] = pivot;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / pivot;
            }
        }
        Some(Self { l })
    }

    /// Diagonal of `L`; all strictly positive by construction.
    pub fn pivots(&self) -> Vec<f64> {
        (0..self.l.dim()).map(|i| self.l[(i, i)]).collect()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]);
        let ch = Cholesky::new(&a).unwrap();
        assert!(ch.pivots().iter().all(|&p| p > 0.0));
        let b = vec![1.0, -2.0, 0.5];
        let x = ch.solve(&b);
        let r = sub(&a.mul_vec(&x), &b);
        assert!(norm2(&r) < 1e-14);
    }

    #[test]
    fn cholesky_rejects_singular_and_indefinite() {
        let singular = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!(Cholesky::new(&singular).is_none());
        let indefinite = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(Cholesky::new(&indefinite).is_none());
    }

    #[test]
    fn spectral_norm_of_rank_one() {
        let m = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!((m.spectral_norm_symmetric() - 2.0).abs() < 1e-10);
        let neg = Matrix::from_rows(&[vec![-3.0, 0.0], vec![0.0, 1.0]]);
        assert!((neg.spectral_norm_symmetric() - 3.0).abs() < 1e-10);
    }
}
