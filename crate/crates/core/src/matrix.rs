//! Small dense matrix helpers for the sandwich covariance algebra.
//!
//! The matrices here are tiny (p x p with p = 6 for the LGCP model), so the
//! crate carries its own LU and Jacobi routines instead of pulling in a
//! linear-algebra dependency; this keeps the code generic over [`Real`].

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            a: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "square matrix rows must have length n");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    /// Rank-one update `self += scale * v v^T`.
    pub fn add_outer(&mut self, v: &[T], scale: T) {
        debug_assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            let si = scale * v[i];
            for j in 0..self.n {
                self.a[i * self.n + j] += si * v[j];
            }
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i * n + k];
                if aik != T::zero() {
                    for j in 0..n {
                        out.a[i * n + j] += aik * other.a[k * n + j];
                    }
                }
            }
        }
        out
    }

    /// Force exact symmetry by averaging with the transpose.
    pub fn symmetrized(&self) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (self.a[i * n + j] + self.a[j * n + i]) / T::of(2.0);
                out.a[i * n + j] = v;
                out.a[j * n + i] = v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.a
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(Float::abs(v)))
    }

    /// LU decomposition with partial pivoting; returns (lu, perm, sign).
    fn lu(&self) -> Option<(Vec<T>, Vec<usize>, T)> {
        let n = self.n;
        let mut lu = self.a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        for col in 0..n {
            let mut pivot = col;
            let mut best = Float::abs(lu[col * n + col]);
            for r in (col + 1)..n {
                let v = Float::abs(lu[r * n + col]);
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best == T::zero() {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot * n + j);
                }
                perm.swap(col, pivot);
                sign = -sign;
            }
            let d = lu[col * n + col];
            for r in (col + 1)..n {
                let f = lu[r * n + col] / d;
                lu[r * n + col] = f;
                for j in (col + 1)..n {
                    let sub = f * lu[col * n + j];
                    lu[r * n + j] -= sub;
                }
            }
        }
        Some((lu, perm, sign))
    }

    /// Determinant via LU; zero for singular input.
    pub fn det(&self) -> T {
        match self.lu() {
            None => T::zero(),
            Some((lu, _, sign)) => {
                let mut d = sign;
                for i in 0..self.n {
                    d = d * lu[i * self.n + i];
                }
                d
            }
        }
    }

    /// Inverse via LU with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let (lu, perm, _) = self.lu().ok_or(Error::SingularB { cond: f64::INFINITY })?;
        let mut inv = Self::zeros(n);
        let mut col = vec![T::zero(); n];
        for e in 0..n {
            // solve A x = e_e using the permuted RHS
            for i in 0..n {
                col[i] = if perm[i] == e { T::one() } else { T::zero() };
            }
            for i in 1..n {
                let mut s = col[i];
                for j in 0..i {
                    s = s - lu[i * n + j] * col[j];
                }
                col[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for j in (i + 1)..n {
                    s = s - lu[i * n + j] * col[j];
                }
                col[i] = s / lu[i * n + i];
            }
            for i in 0..n {
                inv[(i, e)] = col[i];
            }
        }
        Ok(inv)
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
    pub fn sym_eigenvalues(&self) -> Vec<T> {
        let n = self.n;
        let mut a = self.a.clone();
        let tol = T::of(1e-14) * self.max_abs().max(T::one());
        for _sweep in 0..100 {
            let mut off = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(Float::abs(a[i * n + j]));
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if Float::abs(apq) <= tol {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (T::of(2.0) * apq);
                    let t = {
                        let s = if theta >= T::zero() { T::one() } else { -T::one() };
                        s / (Float::abs(theta) + (theta * theta + T::one()).sqrt())
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i * n + i]).collect()
    }

    /// Condition estimate for symmetric matrices: |eig|_max / |eig|_min.
    pub fn sym_condition(&self) -> f64 {
        let eig = self.sym_eigenvalues();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for e in eig {
            let v = Float::abs(e).as_f64();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.a[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.a[i * self.n + j]
    }
}

/// Sample covariance (denominator n-1) of a set of p-vectors.
pub fn sample_covariance<T: Real>(samples: &[Vec<T>]) -> SquareMatrix<T> {
    assert!(samples.len() >= 2, "sample covariance needs >= 2 samples");
    let p = samples[0].len();
    let n = T::from_usize(samples.len()).unwrap();
    let mut mean = vec![T::zero(); p];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = SquareMatrix::zeros(p);
    let mut centered = vec![T::zero(); p];
    for s in samples {
        for k in 0..p {
            centered[k] = s[k] - mean[k];
        }
        cov.add_outer(&centered, T::one());
    }
    let denom = n - T::one();
    for i in 0..p {
        for j in 0..p {
            cov[(i, j)] = cov[(i, j)] / denom;
        }
    }
    cov
}
