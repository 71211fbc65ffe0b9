use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{mlp_shapes, Activation, Network};
use crate::numerics::{adam_step, streams, AdamConfig, AdamState, Real, RngStream};

/// Settings of one deterministic network trained on `MSE + β·L2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FfnnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for FfnnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            learning_rate: 1e-3,
            epochs: 2000,
            batch_size: 16,
            beta: 1e-5,
            patience: 200,
            seed: 0,
        }
    }
}

impl FfnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.hidden.contains(&0) || !(self.learning_rate > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(
                "network config needs positive widths, batch size and learning rate and β ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Trains a tanh MLP with a scalar output on already standardized
/// features. Returns the network and the per-epoch loss.
pub(crate) fn train_regressor<T: Real>(
    features: &[Vec<T>],
    targets: &[T],
    config: &FfnnConfig,
    stream_index: u64,
) -> Result<(Network<T>, Vec<f64>)> {
    config.validate()?;
    let n = features.len();
    if n == 0 || targets.len() != n {
        return Err(Error::InvalidArgument("regressor needs matching, non-empty features and targets".into()));
    }
    let inputs = features[0].len();
    let mut init_rng = RngStream::child(config.seed, streams::INIT, stream_index);
    let mut net = Network::init(mlp_shapes(inputs, &config.hidden, 1, Activation::Tanh), &mut init_rng)?;
    let mut batch_rng = RngStream::child(config.seed, streams::BATCHES, stream_index);
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut state = AdamState::new(net.n_params());
    let mut grads = vec![T::zero(); net.n_params()];
    let mut ws = net.workspace();
    let beta = T::lit(config.beta);
    let mut history = Vec::new();
    let (mut best, mut since_best) = (f64::INFINITY, 0);
    for epoch in 0..config.epochs {
        let order = batch_rng.permutation(n);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::from_count(chunk.len());
            let mut sse = T::zero();
            for &i in chunk {
                let out = net.forward_with(net.params(), &features[i], &mut ws)?[0];
                let r = out - targets[i];
                sse = sse + r * r;
                net.backward_with(net.params(), &mut ws, &[T::lit(2.0) * r * scale], &mut grads, None);
            }
            let l2: T = net.params().iter().map(|&p| p * p).sum();
            for (g, &p) in grads.iter_mut().zip(net.params()) {
                *g = *g + T::lit(2.0) * beta * p;
            }
            let loss = sse * scale + beta * l2;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: "non-finite squared-error loss".into(),
                });
            }
            adam_step(net.params_mut(), &grads, &mut state, &adam).map_err(|e| Error::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
            epoch_loss += loss.as_f64() * chunk.len() as f64 / n as f64;
        }
        history.push(epoch_loss);
        if epoch_loss < best {
            best = epoch_loss;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok((net, history))
}
