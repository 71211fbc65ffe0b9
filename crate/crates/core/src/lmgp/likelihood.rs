//! Profiled negative log-likelihood of the latent-map kernel and its
//! analytic gradient.

use super::Layout;
use crate::error::{Error, Result};
use crate::numerics::{cholesky_unchecked, sigmoid, Cholesky, Matrix, Real};

pub(crate) const NUGGET_MIN_LOG10: f64 = -8.0;
pub(crate) const NUGGET_SPAN_LOG10: f64 = 8.0;

/// `δ = 10^(−8 + 8·sigmoid(u))`, which keeps δ inside `[1e-8, 1]`.
pub(crate) fn nugget_from_logit<T: Real>(u: T) -> T {
    T::lit(10.0).powf(T::lit(NUGGET_MIN_LOG10) + T::lit(NUGGET_SPAN_LOG10) * sigmoid(u))
}

pub(crate) fn logit_from_nugget<T: Real>(delta: T) -> T {
    let lo = T::lit(NUGGET_MIN_LOG10);
    let span = T::lit(NUGGET_SPAN_LOG10);
    let p = ((delta.log10() - lo) / span).max(T::lit(1e-12)).min(T::lit(1.0 - 1e-12));
    (p / (T::one() - p)).ln()
}

/// Training inputs reduced to what the kernel needs.
#[derive(Debug, Clone)]
pub(crate) struct Prepared<T> {
    pub x: Vec<Vec<T>>,
    pub source: Vec<usize>,
    /// Rows of `A_c` selected by each point's one-hot encoding.
    pub cat_rows: Vec<Vec<usize>>,
    pub y: Vec<T>,
}

impl<T: Real> Prepared<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }
}

/// Unpacked view of the optimization vector
/// `[ω (dx), A_s (ds·2), A_c (Στ·2), u]`.
pub(crate) struct Unpacked<'a, T> {
    pub omega: &'a [T],
    pub a_s: &'a [T],
    pub a_c: &'a [T],
    pub u: T,
}

pub(crate) fn unpack<'a, T: Real>(layout: &Layout, theta: &'a [T]) -> Unpacked<'a, T> {
    let (omega, rest) = theta.split_at(layout.dx);
    let (a_s, rest) = rest.split_at(2 * layout.ds);
    let (a_c, rest) = rest.split_at(2 * layout.n_levels);
    Unpacked {
        omega,
        a_s,
        a_c,
        u: rest[0],
    }
}

pub(crate) fn latent_points<T: Real>(p: &Prepared<T>, un: &Unpacked<'_, T>) -> (Vec<[T; 2]>, Vec<[T; 2]>) {
    let zs = p
        .source
        .iter()
        .map(|&s| [un.a_s[2 * s], un.a_s[2 * s + 1]])
        .collect();
    let zc = p
        .cat_rows
        .iter()
        .map(|rows| {
            rows.iter().fold([T::zero(); 2], |acc, &r| {
                [acc[0] + un.a_c[2 * r], acc[1] + un.a_c[2 * r + 1]]
            })
        })
        .collect();
    (zs, zc)
}

#[inline]
fn sq2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    d0 * d0 + d1 * d1
}

/// Correlation matrix `R` (unit diagonal, no nugget).
pub(crate) fn correlation_matrix<T: Real>(p: &Prepared<T>, un: &Unpacked<'_, T>) -> Matrix<T> {
    let n = p.len();
    let (zs, zc) = latent_points(p, un);
    let w: Vec<T> = un.omega.iter().map(|&o| T::lit(10.0).powf(o)).collect();
    let mut r = Matrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let mut d = sq2(zs[i], zs[j]) + sq2(zc[i], zc[j]);
            for ((a, b), wk) in p.x[i].iter().zip(&p.x[j]).zip(&w) {
                let t = *a - *b;
                d = d + *wk * t * t;
            }
            let v = (-d).exp();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

pub(crate) fn factor_with_nugget<T: Real>(r: &Matrix<T>, delta: T) -> Result<Cholesky<T>> {
    let mut k = r.clone();
    for i in 0..k.rows() {
        k[(i, i)] = k[(i, i)] + delta;
    }
    cholesky_unchecked(&k).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::IncreaseNugget,
        other => other,
    })
}

/// Closed-form optima `m̂`, `ŝ²` and the vector `K⁻¹(y − 1m̂)`.
pub(crate) struct Profile<T> {
    pub m: T,
    pub s2: T,
    pub a: Vec<T>,
}

pub(crate) fn profile<T: Real>(chol: &Cholesky<T>, y: &[T]) -> Result<Profile<T>> {
    let n = y.len();
    let ones = vec![T::one(); n];
    let kinv_y = chol.solve(y)?;
    let kinv_one = chol.solve(&ones)?;
    let one_kinv_one: T = kinv_one.iter().copied().sum();
    let m = kinv_y.iter().copied().sum::<T>() / one_kinv_one;
    let a: Vec<T> = kinv_y.iter().zip(&kinv_one).map(|(&u, &v)| u - m * v).collect();
    let s2 = y
        .iter()
        .zip(&a)
        .map(|(&yi, &ai)| (yi - m) * ai)
        .sum::<T>()
        / T::from_count(n);
    if !(s2 > T::zero()) || !s2.is_finite() {
        return Err(Error::NonFinite { what: "profiled process variance".into() });
    }
    Ok(Profile { m, s2, a })
}

/// Profiled NLL `n/2·ln(2π ŝ²) + ½ ln|R+δI| + n/2` and, if requested, its
/// gradient with respect to `theta`.
pub(crate) fn profiled_nll<T: Real>(
    layout: &Layout,
    p: &Prepared<T>,
    theta: &[T],
    with_grad: bool,
) -> Result<(T, Option<Vec<T>>)> {
    let n = p.len();
    let un = unpack(layout, theta);
    let delta = nugget_from_logit(un.u);
    let r = correlation_matrix(p, &un);
    let chol = factor_with_nugget(&r, delta)?;
    let pr = profile(&chol, &p.y)?;
    let nf = T::from_count(n);
    let two_pi = T::lit(std::f64::consts::TAU);
    let nll = nf / T::lit(2.0) * (two_pi * pr.s2).ln() + chol.logdet() / T::lit(2.0) + nf / T::lit(2.0);
    if !nll.is_finite() {
        return Err(Error::NonFinite { what: "negative log-likelihood".into() });
    }
    if !with_grad {
        return Ok((nll, None));
    }

    // G = ½(K⁻¹ − a aᵀ/ŝ²); dNLL = Σ_ij G_ij dK_ij.
    let kinv = chol.inverse();
    let half = T::lit(0.5);
    let g = |i: usize, j: usize| half * (kinv[(i, j)] - pr.a[i] * pr.a[j] / pr.s2);
    let mut grad = vec![T::zero(); theta.len()];
    let (zs, zc) = latent_points(p, &un);
    let off_s = layout.dx;
    let off_c = layout.dx + 2 * layout.ds;
    let mut omega_acc = vec![T::zero(); layout.dx];
    for i in 0..n {
        for j in i + 1..n {
            let w = T::lit(2.0) * g(i, j) * r[(i, j)];
            if w == T::zero() {
                continue;
            }
            for (k, acc) in omega_acc.iter_mut().enumerate() {
                let t = p.x[i][k] - p.x[j][k];
                *acc = *acc + w * t * t;
            }
            if p.source[i] != p.source[j] {
                let (si, sj) = (p.source[i], p.source[j]);
                for c in 0..2 {
                    let d = T::lit(2.0) * w * (zs[i][c] - zs[j][c]);
                    grad[off_s + 2 * si + c] = grad[off_s + 2 * si + c] - d;
                    grad[off_s + 2 * sj + c] = grad[off_s + 2 * sj + c] + d;
                }
            }
            if layout.n_levels > 0 {
                for c in 0..2 {
                    let d = T::lit(2.0) * w * (zc[i][c] - zc[j][c]);
                    for &row in &p.cat_rows[i] {
                        grad[off_c + 2 * row + c] = grad[off_c + 2 * row + c] - d;
                    }
                    for &row in &p.cat_rows[j] {
                        grad[off_c + 2 * row + c] = grad[off_c + 2 * row + c] + d;
                    }
                }
            }
        }
    }
    let ln10 = T::lit(std::f64::consts::LN_10);
    for (k, acc) in omega_acc.into_iter().enumerate() {
        grad[k] = -acc * ln10 * T::lit(10.0).powf(un.omega[k]);
    }
    let trace_g: T = (0..n).map(|i| g(i, i)).sum();
    let s = sigmoid(un.u);
    let ddelta_du = delta * ln10 * T::lit(NUGGET_SPAN_LOG10) * s * (T::one() - s);
    let last = theta.len() - 1;
    grad[last] = trace_g * ddelta_du;
    Ok((nll, Some(grad)))
}
