//! Cholesky factorization of symmetric positive-definite matrices.

use super::matrix::Matrix;
use super::scalar::Real;
use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    factor: Matrix<T>,
}

/// Factorizes `a`. Symmetry is verified to `‖A−Aᵀ‖∞ ≤ 1e-10·‖A‖∞`.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Cholesky<T>> {
    a.check_symmetric(T::lit(1e-10))?;
    cholesky_unchecked(a)
}

/// Factorizes `a` reading only its lower triangle.
pub fn cholesky_unchecked<T: Real>(a: &Matrix<T>) -> Result<Cholesky<T>> {
    let n = a.rows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "cholesky",
            expected: n,
            actual: a.cols(),
        });
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j);
        let mut d = a[(j, j)] - lj[..j].iter().map(|&v| v * v).sum::<T>();
        if !(d > T::zero()) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let s = {
                let (li, lj) = (l.row(i), l.row(j));
                li[..j].iter().zip(&lj[..j]).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
            };
            l[(i, j)] = (a[(i, j)] - s) / d;
        }
    }
    Ok(Cholesky { factor: l })
}

impl<T: Real> Cholesky<T> {
    /// Wraps an existing lower-triangular factor.
    pub fn from_factor(factor: Matrix<T>) -> Result<Self> {
        if !factor.is_square() {
            return Err(Error::DimensionMismatch {
                context: "Cholesky::from_factor",
                expected: factor.rows(),
                actual: factor.cols(),
            });
        }
        Ok(Self { factor })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "Cholesky::solve",
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Result<Vec<T>> {
        self.check_len(b.len())?;
        let l = &self.factor;
        let mut x = b.to_vec();
        for i in 0..x.len() {
            let row = l.row(i);
            let s = row[..i].iter().zip(&x[..i]).fold(T::zero(), |acc, (&a, &v)| acc + a * v);
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Result<Vec<T>> {
        self.check_len(b.len())?;
        let l = &self.factor;
        let n = b.len();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s = s - l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        Ok(x)
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let y = self.solve_lower(b)?;
        self.solve_upper(&y)
    }

    /// `ln |L Lᵀ| = Σ 2 ln L_ii`.
    pub fn logdet(&self) -> T {
        (0..self.dim())
            .map(|i| self.factor[(i, i)].ln())
            .sum::<T>()
            * T::lit(2.0)
    }

    /// Explicit inverse `(L Lᵀ)⁻¹`.
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        // L⁻¹ by forward substitution, then (L⁻¹)ᵀ L⁻¹.
        let mut linv = Matrix::zeros(n, n);
        let l = &self.factor;
        for j in 0..n {
            linv[(j, j)] = T::one() / l[(j, j)];
            for i in j + 1..n {
                let mut s = T::zero();
                for k in j..i {
                    s = s + l[(i, k)] * linv[(k, j)];
                }
                linv[(i, j)] = -s / l[(i, i)];
            }
        }
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in i..n {
                    s = s + linv[(k, i)] * linv[(k, j)];
                }
                inv[(i, j)] = s;
                inv[(j, i)] = s;
            }
        }
        inv
    }

    /// Reconstructs `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        let l = &self.factor;
        Matrix::from_fn(n, n, |i, j| {
            let m = i.min(j);
            (0..=m).fold(T::zero(), |acc, k| acc + l[(i, k)] * l[(j, k)])
        })
    }
}
