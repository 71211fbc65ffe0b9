//! Feed-forward and variational (Bayesian) layers.

mod network;
mod variational;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix, Real};

pub use network::{Network, Workspace};
pub use variational::{
    kl_closed_form, kl_to_prior, sample_variational, GaussianPrior, Realization, VariationalLayer, VariationalNetwork,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => tanh(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y = φ(x)`.
    #[inline]
    pub fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

/// `tanh` through one `exp`; absolute error within a few ulps and about
/// twice as fast as the libm routine, which dominates small-network cost.
#[inline]
pub fn tanh<T: Real>(x: T) -> T {
    let e = (T::lit(-2.0) * x.abs()).exp();
    let t = (T::one() - e) / (T::one() + e);
    if x < T::zero() {
        -t
    } else {
        t
    }
}

/// Shape of one fully connected layer. Parameters are stored flattened as
/// the row-major `out × in` weight matrix followed by the `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            activation,
        }
    }

    /// `c_k = out·in + out`.
    pub fn n_params(&self) -> usize {
        self.outputs * self.inputs + self.outputs
    }
}

/// Shapes for an MLP `inputs → hidden… → outputs`, hidden layers using
/// `hidden_activation` and the output layer the identity.
pub fn mlp_shapes(inputs: usize, hidden: &[usize], outputs: usize, hidden_activation: Activation) -> Vec<LayerShape> {
    let mut shapes = Vec::with_capacity(hidden.len() + 1);
    let mut prev = inputs;
    for &h in hidden {
        shapes.push(LayerShape::new(prev, h, hidden_activation));
        prev = h;
    }
    shapes.push(LayerShape::new(prev, outputs, Activation::Identity));
    shapes
}

/// A concrete layer `z ↦ φ(W z + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseLayer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> DenseLayer<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::DimensionMismatch {
                context: "DenseLayer::new",
                expected: weights.rows(),
                actual: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Unpacks a flattened parameter vector.
    pub fn from_flat(shape: LayerShape, params: &[T]) -> Result<Self> {
        if params.len() != shape.n_params() {
            return Err(Error::DimensionMismatch {
                context: "DenseLayer::from_flat",
                expected: shape.n_params(),
                actual: params.len(),
            });
        }
        let nw = shape.outputs * shape.inputs;
        Self::new(
            Matrix::from_vec(shape.outputs, shape.inputs, params[..nw].to_vec())?,
            params[nw..].to_vec(),
            shape.activation,
        )
    }

    pub fn shape(&self) -> LayerShape {
        LayerShape::new(self.weights.cols(), self.weights.rows(), self.activation)
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut p = self.weights.as_slice().to_vec();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let pre = self.weights.matvec(input)?;
        Ok(pre
            .into_iter()
            .zip(&self.bias)
            .map(|(v, &b)| self.activation.apply(v + b))
            .collect())
    }
}

/// `z_1 = x`, `z_k = φ_k(W_k z_{k−1} + b_k)`.
pub fn ffnn_forward<T: Real>(layers: &[DenseLayer<T>], input: &[T]) -> Result<Vec<T>> {
    layers
        .iter()
        .try_fold(input.to_vec(), |z, layer| layer.forward(&z))
}

/// Sum of squares of every weight and bias.
pub fn l2_penalty<'a, T: Real + 'a>(params: impl IntoIterator<Item = &'a T>) -> T {
    params.into_iter().map(|&p| p * p).sum()
}
