//! Reverse-mode automatic differentiation over scalar computation graphs.
//!
//! Each arithmetic operation on a [`Var`] appends one node to its [`Tape`]
//! recording the parent indices and the local partial derivatives. Nodes are
//! appended in evaluation order, so the tape is already topologically sorted
//! and the backward sweep is a single reverse pass.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Node<T> {
    value: T,
    parents: [(usize, T); 2],
    arity: u8,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    index: usize,
    value: T,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} = {})", self.index, self.value)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: T, parents: [(usize, T); 2], arity: u8) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node {
            value,
            parents,
            arity,
        });
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// New independent variable (leaf).
    pub fn var(&self, value: T) -> Var<'_, T> {
        self.push(value, [(0, T::zero()); 2], 0)
    }

    /// Constants are leaves whose adjoint is never read.
    pub fn constant(&self, value: T) -> Var<'_, T> {
        self.var(value)
    }

    /// Index of the first node holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.nodes.borrow().iter().position(|n| !n.value.is_finite())
    }

    /// Adjoints `∂out/∂node` for every node on the tape.
    pub fn adjoints(&self, out: Var<'_, T>) -> Vec<T> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        adj[out.index] = T::one();
        for i in (0..=out.index).rev() {
            let a = adj[i];
            if a == T::zero() {
                continue;
            }
            let node = &nodes[i];
            for &(p, d) in &node.parents[..node.arity as usize] {
                adj[p] = adj[p] + a * d;
            }
        }
        adj
    }
}

impl<'t, T: Real> Var<'t, T> {
    #[inline]
    pub fn value(&self) -> T {
        self.value
    }

    #[inline]
    pub fn index(&self) -> usize {
        self.index
    }

    #[inline]
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn constant(&self, value: T) -> Self {
        self.tape.constant(value)
    }

    fn unary(self, value: T, d: T) -> Self {
        self.tape.push(value, [(self.index, d), (0, T::zero())], 1)
    }

    fn binary(self, other: Self, value: T, da: T, db: T) -> Self {
        self.tape
            .push(value, [(self.index, da), (other.index, db)], 2)
    }

    pub fn exp(self) -> Self {
        let v = self.value.exp();
        self.unary(v, v)
    }

    pub fn ln(self) -> Self {
        self.unary(self.value.ln(), self.value.recip())
    }

    pub fn sqrt(self) -> Self {
        let v = self.value.sqrt();
        self.unary(v, T::lit(0.5) / v)
    }

    pub fn tanh(self) -> Self {
        let v = self.value.tanh();
        self.unary(v, T::one() - v * v)
    }

    pub fn sigmoid(self) -> Self {
        let v = super::scalar::sigmoid(self.value);
        self.unary(v, v * (T::one() - v))
    }

    pub fn softplus(self) -> Self {
        let v = super::scalar::softplus(self.value);
        self.unary(v, super::scalar::sigmoid(self.value))
    }

    pub fn powi(self, n: i32) -> Self {
        let v = self.value.powi(n);
        let d = T::from_i32(n).expect("small integer") * self.value.powi(n - 1);
        self.unary(v, d)
    }

    pub fn powf(self, p: T) -> Self {
        let v = self.value.powf(p);
        self.unary(v, p * self.value.powf(p - T::one()))
    }

    pub fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    pub fn square(self) -> Self {
        self.unary(self.value * self.value, T::lit(2.0) * self.value)
    }

    /// Sum of an iterator of variables; `None` for an empty iterator.
    pub fn sum<I: IntoIterator<Item = Self>>(iter: I) -> Option<Self> {
        iter.into_iter().reduce(|a, b| a + b)
    }
}

impl<'t, T: Real> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, T::one(), T::one())
    }
}

impl<'t, T: Real> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, T::one(), -T::one())
    }
}

impl<'t, T: Real> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t, T: Real> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.value.recip();
        let v = self.value * inv;
        self.binary(rhs, v, inv, -v * inv)
    }
}

impl<'t, T: Real> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -T::one())
    }
}

impl<'t, T: Real> Add<T> for Var<'t, T> {
    type Output = Self;
    fn add(self, rhs: T) -> Self {
        self.unary(self.value + rhs, T::one())
    }
}

impl<'t, T: Real> Sub<T> for Var<'t, T> {
    type Output = Self;
    fn sub(self, rhs: T) -> Self {
        self.unary(self.value - rhs, T::one())
    }
}

impl<'t, T: Real> Mul<T> for Var<'t, T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t, T: Real> Div<T> for Var<'t, T> {
    type Output = Self;
    fn div(self, rhs: T) -> Self {
        self.unary(self.value / rhs, rhs.recip())
    }
}

/// Value and gradient of a scalar function built on a fresh tape.
///
/// Fails with the index of the first non-finite node if the forward pass
/// produced a NaN or infinity.
pub fn value_and_grad<T, F>(f: F, params: &[T]) -> Result<(T, Vec<T>)>
where
    T: Real,
    F: for<'t> Fn(&[Var<'t, T>]) -> Var<'t, T>,
{
    let tape = Tape::new();
    let vars: Vec<_> = params.iter().map(|&p| tape.var(p)).collect();
    let out = f(&vars);
    if let Some(node) = tape.first_non_finite() {
        return Err(Error::NonFiniteNode { node });
    }
    let adj = tape.adjoints(out);
    Ok((out.value(), vars.iter().map(|v| adj[v.index()]).collect()))
}

/// Gradient of a scalar tape function at `params`.
pub fn grad<T, F>(f: F, params: &[T]) -> Result<Vec<T>>
where
    T: Real,
    F: for<'t> Fn(&[Var<'t, T>]) -> Var<'t, T>,
{
    value_and_grad(f, params).map(|(_, g)| g)
}

/// Central finite-difference gradient, used as a test oracle.
pub fn finite_difference_grad<T: Real>(f: impl Fn(&[T]) -> T, params: &[T], step: T) -> Vec<T> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let fp = f(&p);
            p[i] = orig - step;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (T::lit(2.0) * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = grad(|v| v[0] * v[0], &[3.0f64]).unwrap();
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn product_rule() {
        let g = grad(|v| v[0] * v[1], &[2.0f64, 5.0]).unwrap();
        assert_eq!(g, vec![5.0, 2.0]);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = grad(|v| v[0].constant(4.0) + v[1] * 0.0, &[1.0f64, 2.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn reused_variable_accumulates() {
        // f = x·x·x + exp(x) → 3x² + eˣ
        let x = 0.7f64;
        let g = grad(|v| v[0] * v[0] * v[0] + v[0].exp(), &[x]).unwrap();
        assert!((g[0] - (3.0 * x * x + x.exp())).abs() < 1e-14);
    }

    #[test]
    fn non_finite_forward_is_reported() {
        let err = grad(|v| (v[0] - 1.0).ln(), &[1.0f64]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteNode { node: 2 }));
    }
}
