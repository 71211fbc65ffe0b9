//! Probabilistic neural data fusion: a variational network embeds the data
//! source in a 2-D fidelity manifold (Block 1), a deterministic network
//! embeds categorical inputs (Block 2), and an output network (Block 3)
//! maps `[x, z^s, z^c]` to a Gaussian predictive distribution.

mod train;

use serde::{Deserialize, Serialize};

use crate::data::{one_hot_encode, one_hot_source, validate_input, MixedInput, Schema, Standardizer};
use crate::error::{Error, Result};
use crate::neural::{
    mlp_shapes, Activation, GaussianPrior, Network, Realization, VariationalNetwork, Workspace,
};
use crate::numerics::{softplus, streams, Real, RngStream};

pub use train::{train, EpochRecord};

pub const SIGMA_FLOOR: f64 = 1e-6;
pub const Z_SCORE_95: f64 = 1.96;
pub const BLOCK12_WIDTH: usize = 5;
pub const MANIFOLD_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// KL divergence of Block 1.
    pub alpha1: f64,
    /// Interval score.
    pub alpha2: f64,
    /// L2 penalty on the deterministic blocks.
    pub alpha3: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 2e-2,
            alpha2: 0.1,
            alpha3: 1e-5,
            gamma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Realizations averaged in the loss of each batch.
    pub m_train: usize,
    /// Realizations in the prediction ensemble.
    pub m_pred: usize,
    /// Stop after this many epochs without a new best epoch loss.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 16,
            learning_rate: 3e-3,
            m_train: 200,
            m_pred: 1000,
            patience: 200,
            seed: 0,
        }
    }
}

/// Architecture, loss weights and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProNdfConfig {
    /// Hidden widths of Block 3.
    pub hidden: Vec<usize>,
    pub prior_sigma: f64,
    pub weights: LossWeights,
    pub train: TrainConfig,
    /// `false` replaces Block 1 by a deterministic, L2-regularized network.
    pub probabilistic_block1: bool,
    /// `false` drops the σ̂ head; the loss becomes the squared error and the
    /// predictive variance is the ensemble spread alone.
    pub probabilistic_output: bool,
}

impl Default for ProNdfConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            prior_sigma: 1.0,
            weights: LossWeights::default(),
            train: TrainConfig::default(),
            probabilistic_block1: true,
            probabilistic_output: true,
        }
    }
}

impl ProNdfConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let t = &self.train;
        if !(w.gamma > 0.0 && w.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {}", w.gamma)));
        }
        if [w.alpha1, w.alpha2, w.alpha3].iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        if t.m_train == 0 || t.m_pred == 0 || t.batch_size == 0 {
            return Err(Error::InvalidArgument("m_train, m_pred and batch_size must be ≥ 1".into()));
        }
        if !(t.learning_rate > 0.0) || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("learning rate and hidden widths must be positive".into()));
        }
        GaussianPrior::new(self.prior_sigma)?;
        Ok(())
    }
}

/// Block 1 is variational in the full model and a plain network in the
/// deterministic ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", tag = "kind", content = "network", rename_all = "lowercase")]
pub enum SourceBlock<T: Real> {
    Variational(VariationalNetwork<T>),
    Deterministic(Network<T>),
}

impl<T: Real> SourceBlock<T> {
    pub fn network(&self) -> &Network<T> {
        match self {
            Self::Variational(v) => v.network(),
            Self::Deterministic(n) => n,
        }
    }

    pub fn is_variational(&self) -> bool {
        matches!(self, Self::Variational(_))
    }

    pub fn draw(&self, rng: &mut RngStream) -> Realization<T> {
        match self {
            Self::Variational(v) => v.sample(rng),
            Self::Deterministic(n) => Realization {
                theta: n.params().to_vec(),
                eps: Vec::new(),
            },
        }
    }

    pub(crate) fn flat_params(&self) -> Vec<T> {
        match self {
            Self::Variational(v) => v.flat_params(),
            Self::Deterministic(n) => n.params().to_vec(),
        }
    }

    pub(crate) fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        match self {
            Self::Variational(v) => v.set_flat_params(flat),
            Self::Deterministic(n) => {
                n.params_mut().copy_from_slice(flat);
                Ok(())
            }
        }
    }
}

/// A trained (or freshly initialized) probabilistic data-fusion network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ProNdfModel<T: Real> {
    pub schema: Schema,
    pub standardizer: Standardizer<T>,
    pub block1: SourceBlock<T>,
    pub block2: Option<Network<T>>,
    pub block3: Network<T>,
    pub probabilistic_output: bool,
    /// Categorical level combinations seen in training, for manifold export.
    pub combinations: Vec<Vec<usize>>,
}

/// Level labels of a categorical combination joined by `|`.
pub fn combo_label(schema: &Schema, tc: &[usize]) -> String {
    tc.iter()
        .zip(&schema.categorical)
        .map(|(&l, v)| v.levels[l].as_str())
        .collect::<Vec<_>>()
        .join("|")
}

/// Output of one forward pass in standardized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationOutput<T> {
    pub mu: T,
    /// `None` when the output head is deterministic.
    pub sigma: Option<T>,
}

/// `σ̂ = softplus(raw) + 1e-6`.
#[inline]
pub fn sigma_from_raw<T: Real>(raw: T) -> T {
    softplus(raw) + T::lit(SIGMA_FLOOR)
}

/// Negatively oriented interval score of the PI `[μ − 1.96σ, μ + 1.96σ]`:
/// `(u − l) + (2/γ)(l − y)·1{y < l} + (2/γ)(y − u)·1{y > u}`.
pub fn interval_score<T: Real>(y: T, mu: T, sigma: T, gamma: T) -> T {
    let half = T::lit(Z_SCORE_95) * sigma;
    interval_score_bounds(y, mu - half, mu + half, gamma)
}

/// Interval score for explicit bounds `l ≤ u`.
pub fn interval_score_bounds<T: Real>(y: T, l: T, u: T, gamma: T) -> T {
    let penalty = T::lit(2.0) / gamma;
    let mut s = u - l;
    if y < l {
        s = s + penalty * (l - y);
    } else if y > u {
        s = s + penalty * (y - u);
    }
    s
}

/// Ensemble mean `μ̂ = (1/M)Σμ_j` and predictive variance
/// `v̂ = (1/M)Σ(σ_j² + μ_j²) − μ̂²`, accumulated as the mean aleatoric part
/// plus the spread of the means so that it stays non-negative.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnsembleAccumulator<T> {
    count: usize,
    mean: T,
    m2: T,
    sigma2: T,
}

impl<T: Real> EnsembleAccumulator<T> {
    pub fn push(&mut self, mu: T, sigma2: T) {
        self.count += 1;
        let delta = mu - self.mean;
        self.mean = self.mean + delta / T::from_count(self.count);
        self.m2 = self.m2 + delta * (mu - self.mean);
        self.sigma2 = self.sigma2 + sigma2;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self) -> (T, T) {
        let m = T::from_count(self.count.max(1));
        (self.mean, self.sigma2 / m + self.m2 / m)
    }
}

pub fn ensemble_moments<T: Real>(members: &[(T, T)]) -> (T, T) {
    let mut acc = EnsembleAccumulator::default();
    for &(mu, sigma) in members {
        acc.push(mu, sigma * sigma);
    }
    acc.finish()
}

/// One row of the fidelity-manifold export. `source` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub source: usize,
    pub realization: usize,
    pub z1: f64,
    pub z2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPoint {
    pub combo: String,
    pub z1: f64,
    pub z2: f64,
}

/// Inputs mapped to standardized `x` plus encodings.
pub(crate) struct Encoded<T> {
    pub x: Vec<T>,
    pub source: usize,
    pub zeta_c: Vec<T>,
}

impl<T: Real> ProNdfModel<T> {
    /// Random initialization for `schema`.
    pub fn init(schema: Schema, standardizer: Standardizer<T>, config: &ProNdfConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(config.train.seed, streams::INIT);
        let ds = schema.n_sources;
        let b1_shapes = mlp_shapes(ds, &[BLOCK12_WIDTH], MANIFOLD_DIM, Activation::Tanh);
        let block1 = if config.probabilistic_block1 {
            SourceBlock::Variational(VariationalNetwork::init(b1_shapes, &mut rng)?)
        } else {
            SourceBlock::Deterministic(Network::init(b1_shapes, &mut rng)?)
        };
        let block2 = if schema.dt() > 0 {
            let shapes = mlp_shapes(schema.one_hot_len(), &[BLOCK12_WIDTH], MANIFOLD_DIM, Activation::Sigmoid);
            Some(Network::init(shapes, &mut rng)?)
        } else {
            None
        };
        let n_in = schema.dx() + MANIFOLD_DIM + if block2.is_some() { MANIFOLD_DIM } else { 0 };
        let n_out = if config.probabilistic_output { 2 } else { 1 };
        let block3 = Network::init(mlp_shapes(n_in, &config.hidden, n_out, Activation::Tanh), &mut rng)?;
        Ok(Self {
            schema,
            standardizer,
            block1,
            block2,
            block3,
            probabilistic_output: config.probabilistic_output,
            combinations: Vec::new(),
        })
    }

    pub fn n_sources(&self) -> usize {
        self.schema.n_sources
    }

    pub(crate) fn encode(&self, input: &MixedInput<T>) -> Result<Encoded<T>> {
        validate_input(&self.schema, input)?;
        let x = self.standardizer.transform_x(&input.x)?;
        let zeta_c = if self.block2.is_some() {
            one_hot_encode(&input.tc, &self.schema)?
        } else {
            Vec::new()
        };
        Ok(Encoded {
            x,
            source: input.source,
            zeta_c,
        })
    }

    /// `z^s` of every source level under one Block-1 realization.
    pub(crate) fn source_latents(&self, r: &Realization<T>, ws: &mut Workspace<T>) -> Result<Vec<[T; 2]>> {
        let net = self.block1.network();
        (0..self.n_sources())
            .map(|s| {
                let out = net.forward_with(&r.theta, &one_hot_source(s, self.n_sources())?, ws)?;
                Ok([out[0], out[1]])
            })
            .collect()
    }

    pub(crate) fn categorical_latent(&self, zeta_c: &[T]) -> Result<Option<[T; 2]>> {
        match &self.block2 {
            Some(net) => {
                let out = net.forward(zeta_c)?;
                Ok(Some([out[0], out[1]]))
            }
            None => Ok(None),
        }
    }

    pub(crate) fn block3_input(x: &[T], zs: [T; 2], zc: Option<[T; 2]>, buf: &mut Vec<T>) {
        buf.clear();
        buf.extend_from_slice(x);
        buf.extend_from_slice(&zs);
        if let Some(zc) = zc {
            buf.extend_from_slice(&zc);
        }
    }

    pub(crate) fn head(&self, out: &[T]) -> RealizationOutput<T> {
        RealizationOutput {
            mu: out[0],
            sigma: self.probabilistic_output.then(|| sigma_from_raw(out[1])),
        }
    }

    /// One realization: a single Block-1 draw followed by Blocks 2 and 3.
    /// Outputs are in standardized units.
    pub fn forward_realization(&self, input: &MixedInput<T>, rng: &mut RngStream) -> Result<RealizationOutput<T>> {
        let enc = self.encode(input)?;
        let r = self.block1.draw(rng);
        let mut ws = self.block1.network().workspace();
        let zs = self.source_latents(&r, &mut ws)?[enc.source];
        let zc = self.categorical_latent(&enc.zeta_c)?;
        let mut buf = Vec::new();
        Self::block3_input(&enc.x, zs, zc, &mut buf);
        let out = self.block3.forward(&buf)?;
        Ok(self.head(&out))
    }

    /// Ensemble predictions `(μ̂, v̂)` in original units, using the same
    /// `m_pred` Block-1 draws for every input.
    pub fn predict_many(&self, inputs: &[MixedInput<T>], m_pred: usize, seed: u64) -> Result<Vec<(T, T)>> {
        if m_pred == 0 {
            return Err(Error::InvalidArgument("m_pred must be ≥ 1".into()));
        }
        let encoded = inputs.iter().map(|p| self.encode(p)).collect::<Result<Vec<_>>>()?;
        let zcs = encoded
            .iter()
            .map(|e| self.categorical_latent(&e.zeta_c))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = RngStream::new(seed, streams::PREDICT);
        let mut acc = vec![EnsembleAccumulator::<T>::default(); inputs.len()];
        let mut ws1 = self.block1.network().workspace();
        let mut ws3 = self.block3.workspace();
        let mut buf = Vec::new();
        let draws = if self.block1.is_variational() { m_pred } else { 1 };
        for _ in 0..draws {
            let r = self.block1.draw(&mut rng);
            let zs = self.source_latents(&r, &mut ws1)?;
            for ((e, zc), a) in encoded.iter().zip(&zcs).zip(acc.iter_mut()) {
                Self::block3_input(&e.x, zs[e.source], *zc, &mut buf);
                let out = self.block3.forward_with(self.block3.params(), &buf, &mut ws3)?;
                let h = self.head(out);
                let s2 = h.sigma.map_or(T::zero(), |s| s * s);
                a.push(h.mu, s2);
            }
        }
        Ok(acc
            .iter()
            .map(|a| {
                let (m, v) = a.finish();
                (self.standardizer.invert_y(m), self.standardizer.invert_variance(v))
            })
            .collect())
    }

    pub fn predict(&self, input: &MixedInput<T>, m_pred: usize, seed: u64) -> Result<(T, T)> {
        Ok(self.predict_many(std::slice::from_ref(input), m_pred, seed)?[0])
    }

    /// `m` realizations of every source's point in the fidelity manifold,
    /// ordered by source then realization.
    pub fn export_fidelity_manifold(&self, m: usize, seed: u64) -> Result<Vec<FidelityPoint>> {
        let mut rng = RngStream::new(seed, streams::MANIFOLD);
        let mut ws = self.block1.network().workspace();
        let mut per_draw = Vec::with_capacity(m);
        for _ in 0..m {
            let r = self.block1.draw(&mut rng);
            per_draw.push(self.source_latents(&r, &mut ws)?);
        }
        let mut rows = Vec::with_capacity(m * self.n_sources());
        for s in 0..self.n_sources() {
            for (j, zs) in per_draw.iter().enumerate() {
                rows.push(FidelityPoint {
                    source: s + 1,
                    realization: j + 1,
                    z1: zs[s][0].as_f64(),
                    z2: zs[s][1].as_f64(),
                });
            }
        }
        Ok(rows)
    }

    /// Mean over `m` realizations of `‖z^s(source) − z^s(HF)‖`, paired
    /// within each realization; entry 0 is 0.
    pub fn fidelity_distances(&self, m: usize, seed: u64) -> Result<Vec<f64>> {
        let rows = self.export_fidelity_manifold(m, seed)?;
        let hf = &rows[..m];
        Ok((0..self.n_sources())
            .map(|s| {
                let pts = &rows[s * m..(s + 1) * m];
                pts.iter()
                    .zip(hf)
                    .map(|(p, h)| ((p.z1 - h.z1).powi(2) + (p.z2 - h.z2).powi(2)).sqrt())
                    .sum::<f64>()
                    / m.max(1) as f64
            })
            .collect())
    }

    /// Block-2 image of every categorical combination seen in training.
    pub fn export_categorical_manifold(&self) -> Result<Vec<CategoricalPoint>> {
        if self.block2.is_none() {
            return Err(Error::Unsupported("no categorical inputs".into()));
        }
        self.combinations
            .iter()
            .map(|tc| {
                let z = self.categorical_latent(&one_hot_encode(tc, &self.schema)?)?.expect("block 2");
                Ok(CategoricalPoint {
                    combo: combo_label(&self.schema, tc),
                    z1: z[0].as_f64(),
                    z2: z[1].as_f64(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests;
