//! Small dense vector and matrix helpers generic over [`Scalar`].
//!
//! The operators in this crate act on short vectors (tens of entries), so
//! plain `Vec<S>` storage and straightforward loops are sufficient.

use crate::scalar::{cast, Scalar};

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<S: Scalar>(a: &[S], s: S) -> Vec<S> {
    a.iter().map(|&x| x * s).collect()
}

/// `a + s * b`
pub fn axpy<S: Scalar>(a: &[S], s: S, b: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

/// `(1 - t) a + t b`
pub fn lerp<S: Scalar>(a: &[S], b: &[S], t: S) -> Vec<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (S::one() - t) * x + t * y).collect()
}

pub fn dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<S>().sqrt()
}

pub fn all_finite<S: Scalar>(a: &[S]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Euclidean norm of the concatenation `[a; b]`.
pub fn stacked_norm<S: Scalar>(a: &[S], b: &[S]) -> S {
    (dot(a, a) + dot(b, b)).sqrt()
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[S]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[S]) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data: data.to_vec() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ v` without forming the transpose.
    pub fn tr_mul_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.rows, "matrix-vector dimension mismatch");
        let mut out = vec![S::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matrix-matrix dimension mismatch");
        Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self[(i, k)] * other[(k, j)]).sum()
        })
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Eigenvalues of a symmetric matrix, ascending (cyclic Jacobi).
    pub fn symmetric_eigenvalues(&self) -> Vec<S> {
        assert_eq!(self.rows, self.cols, "eigenvalues need a square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let eps = S::epsilon();
        for _sweep in 0..100 {
            let mut off = S::zero();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off = off + a[(i, j)] * a[(i, j)];
                    }
                }
            }
            let diag: S = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
            if off <= eps * eps * diag || off == S::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == S::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (cast::<S>(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                    let c = S::one() / (t * t + S::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<S> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// Spectral norm `‖A‖₂ = √λ_max(AᵀA)`.
    pub fn spectral_norm(&self) -> S {
        if self.rows == 0 || self.cols == 0 {
            return S::zero();
        }
        let ata = self.transpose().mul(self);
        ata.symmetric_eigenvalues().last().copied().unwrap_or(S::zero()).max(S::zero()).sqrt()
    }
}

impl<S> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}
