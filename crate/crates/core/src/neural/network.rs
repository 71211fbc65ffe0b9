use serde::{Deserialize, Serialize};

use super::{DenseLayer, LayerShape};
use crate::error::{Error, Result};
use crate::numerics::{Real, RngStream};

/// MLP whose parameters live in one flat vector, layer by layer, so that
/// optimizers and variational samplers can address them directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Network<T> {
    shapes: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<T>,
}

/// Reusable buffers for forward/backward passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    carry: Vec<T>,
}

/// Dot product with eight independent partial sums.
#[inline]
fn dot8<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn offsets_of(shapes: &[LayerShape]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(shapes.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for s in shapes {
        acc += s.n_params();
        offsets.push(acc);
    }
    offsets
}

impl<T: Real> Network<T> {
    pub fn zeros(shapes: Vec<LayerShape>) -> Result<Self> {
        for pair in shapes.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    context: "Network layer chain",
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        if shapes.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        let offsets = offsets_of(&shapes);
        let params = vec![T::zero(); *offsets.last().unwrap()];
        Ok(Self {
            shapes,
            offsets,
            params,
        })
    }

    /// Glorot-normal weights, zero biases.
    pub fn init(shapes: Vec<LayerShape>, rng: &mut RngStream) -> Result<Self> {
        let mut net = Self::zeros(shapes)?;
        for k in 0..net.shapes.len() {
            let s = net.shapes[k];
            let std = (2.0 / (s.inputs + s.outputs) as f64).sqrt();
            let start = net.offsets[k];
            for p in &mut net.params[start..start + s.inputs * s.outputs] {
                *p = T::lit(std * rng.normal::<f64>());
            }
        }
        Ok(net)
    }

    pub fn from_params(shapes: Vec<LayerShape>, params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(shapes)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                context: "Network::from_params",
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn n_inputs(&self) -> usize {
        self.shapes[0].inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.shapes.last().unwrap().outputs
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Parameter range `[start, end)` of layer `k`.
    pub fn layer_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn layers(&self) -> Vec<DenseLayer<T>> {
        self.layers_with(&self.params)
    }

    pub fn layers_with(&self, params: &[T]) -> Vec<DenseLayer<T>> {
        self.shapes
            .iter()
            .enumerate()
            .map(|(k, &s)| DenseLayer::from_flat(s, &params[self.layer_range(k)]).expect("layout"))
            .collect()
    }

    pub fn workspace(&self) -> Workspace<T> {
        let mut acts = vec![vec![T::zero(); self.n_inputs()]];
        acts.extend(self.shapes.iter().map(|s| vec![T::zero(); s.outputs]));
        let widest = self
            .shapes
            .iter()
            .map(|s| s.inputs.max(s.outputs))
            .max()
            .unwrap_or(0);
        Workspace {
            acts,
            delta: Vec::with_capacity(widest),
            carry: Vec::with_capacity(widest),
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let mut ws = self.workspace();
        Ok(self.forward_with(&self.params, input, &mut ws)?.to_vec())
    }

    /// Forward pass with an explicit parameter vector (e.g. a variational
    /// draw); activations are kept in `ws` for a following backward pass.
    pub fn forward_with<'w>(&self, params: &[T], input: &[T], ws: &'w mut Workspace<T>) -> Result<&'w [T]> {
        if input.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.n_inputs(),
                actual: input.len(),
            });
        }
        debug_assert_eq!(params.len(), self.params.len());
        if ws.acts.len() != self.shapes.len() + 1 {
            *ws = self.workspace();
        }
        ws.acts[0].copy_from_slice(input);
        for (k, s) in self.shapes.iter().enumerate() {
            let p = &params[self.offsets[k]..self.offsets[k + 1]];
            let (w, b) = p.split_at(s.inputs * s.outputs);
            let (before, after) = ws.acts.split_at_mut(k + 1);
            let x = &before[k][..s.inputs];
            let out = &mut after[0][..s.outputs];
            for ((o, row), &bi) in out.iter_mut().zip(w.chunks_exact(s.inputs)).zip(b) {
                *o = s.activation.apply(bi + dot8(row, x));
            }
        }
        Ok(ws.acts.last().unwrap())
    }

    /// Backpropagates `grad_out = ∂L/∂output` through the activations stored
    /// by the last `forward_with`. Parameter gradients are accumulated into
    /// `grad_params`; `grad_input`, when given, is overwritten.
    pub fn backward_with(
        &self,
        params: &[T],
        ws: &mut Workspace<T>,
        grad_out: &[T],
        grad_params: &mut [T],
        grad_input: Option<&mut [T]>,
    ) {
        let n = self.shapes.len();
        let Workspace { acts, delta, carry } = ws;
        delta.clear();
        let last = self.shapes[n - 1];
        delta.extend(
            grad_out
                .iter()
                .zip(&acts[n])
                .map(|(&g, &y)| g * last.activation.derivative_from_output(y)),
        );
        let mut grad_input = grad_input;
        for k in (0..n).rev() {
            let s = self.shapes[k];
            let range = self.offsets[k]..self.offsets[k + 1];
            let p = &params[range.clone()];
            let gp = &mut grad_params[range];
            let (w, _) = p.split_at(s.inputs * s.outputs);
            let (gw, gb) = gp.split_at_mut(s.inputs * s.outputs);
            let x = &acts[k];
            carry.clear();
            carry.resize(s.inputs, T::zero());
            for (((&d, row), grow), gbi) in delta
                .iter()
                .zip(w.chunks_exact(s.inputs))
                .zip(gw.chunks_exact_mut(s.inputs))
                .zip(gb.iter_mut())
            {
                *gbi = *gbi + d;
                for ((g, c), (&xj, &wj)) in grow.iter_mut().zip(carry.iter_mut()).zip(x.iter().zip(row)) {
                    *g = *g + d * xj;
                    *c = *c + d * wj;
                }
            }
            if k > 0 {
                let act = self.shapes[k - 1].activation;
                delta.clear();
                delta.extend(
                    carry
                        .iter()
                        .zip(x.iter())
                        .map(|(&c, &y)| c * act.derivative_from_output(y)),
                );
            } else if let Some(gi) = grad_input.as_deref_mut() {
                gi.copy_from_slice(carry);
            }
        }
    }
}
