use serde::{Deserialize, Serialize};

use super::{sigma_from_raw, ProNdfConfig, ProNdfModel, SourceBlock, Z_SCORE_95};
use crate::data::{one_hot_source, MixedDataset, Standardizer};
use crate::error::{Error, Result};
use crate::neural::{GaussianPrior, Realization};
use crate::numerics::{adam_step, sigmoid, streams, AdamConfig, AdamState, Real, RngStream};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Per-epoch training log (standardized units, averaged over batches).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub nll: f64,
    pub kl: f64,
    pub interval_score: f64,
    pub l2: f64,
}

/// A training row with standardized `x` and `y`.
#[derive(Debug, Clone)]
pub(crate) struct Row<T> {
    pub x: Vec<T>,
    pub source: usize,
    pub zeta_c: Vec<T>,
    pub y: T,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LossParts<T> {
    pub total: T,
    pub nll: T,
    pub kl: T,
    pub interval_score: T,
    pub l2: T,
}

#[derive(Debug, Clone)]
pub(crate) struct Grads<T> {
    pub b1: Vec<T>,
    pub b2: Vec<T>,
    pub b3: Vec<T>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(model: &ProNdfModel<T>) -> Self {
        Self {
            b1: vec![T::zero(); model.block1.flat_params().len()],
            b2: vec![T::zero(); model.block2.as_ref().map_or(0, |n| n.n_params())],
            b3: vec![T::zero(); model.block3.n_params()],
        }
    }

    fn clear(&mut self) {
        for v in [&mut self.b1, &mut self.b2, &mut self.b3] {
            v.iter_mut().for_each(|g| *g = T::zero());
        }
    }
}

fn check<T: Real>(value: T, term: &str) -> Result<T> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            what: format!("{term} term of the loss"),
        })
    }
}

impl<T: Real> ProNdfModel<T> {
    pub(crate) fn encode_rows(&self, dataset: &MixedDataset<T>) -> Result<Vec<Row<T>>> {
        dataset
            .rows()
            .iter()
            .map(|s| {
                let e = self.encode(&s.input)?;
                Ok(Row {
                    x: e.x,
                    source: e.source,
                    zeta_c: e.zeta_c,
                    y: self.standardizer.transform_y(s.y),
                })
            })
            .collect()
    }

    /// All trainable parameters: Block-1 variational parameters (or
    /// weights), then Block 2, then Block 3.
    pub fn flat_params(&self) -> Vec<T> {
        let mut flat = self.block1.flat_params();
        if let Some(b2) = &self.block2 {
            flat.extend_from_slice(b2.params());
        }
        flat.extend_from_slice(self.block3.params());
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        let n1 = self.block1.flat_params().len();
        let n2 = self.block2.as_ref().map_or(0, |b| b.n_params());
        let n3 = self.block3.n_params();
        if flat.len() != n1 + n2 + n3 {
            return Err(Error::DimensionMismatch {
                context: "ProNdfModel::set_flat_params",
                expected: n1 + n2 + n3,
                actual: flat.len(),
            });
        }
        self.block1.set_flat_params(&flat[..n1])?;
        if let Some(b2) = self.block2.as_mut() {
            b2.params_mut().copy_from_slice(&flat[n1..n1 + n2]);
        }
        self.block3.params_mut().copy_from_slice(&flat[n1 + n2..]);
        Ok(())
    }

    /// Total training loss on all rows of `data` and its gradient with
    /// respect to `flat_params()`. Block-1 realizations are fixed by the
    /// standard-normal draws `eps`; a deterministic Block 1 ignores them.
    pub fn loss_and_gradient(&self, data: &MixedDataset<T>, eps: &[Vec<T>], config: &ProNdfConfig) -> Result<(T, Vec<T>)> {
        let rows = self.encode_rows(data)?;
        let refs: Vec<&Row<T>> = rows.iter().collect();
        let reals = match &self.block1 {
            SourceBlock::Variational(v) => eps
                .iter()
                .map(|e| v.realization_from_eps(e.clone()))
                .collect::<Result<Vec<_>>>()?,
            SourceBlock::Deterministic(_) => vec![self.block1.draw(&mut RngStream::new(0, 0))],
        };
        let mut g = Grads::zeros_like(self);
        let total = self.batch_loss(&refs, &reals, config, Some(&mut g))?.total;
        let mut flat = g.b1;
        flat.extend(g.b2);
        flat.extend(g.b3);
        Ok((total, flat))
    }

    /// Loss `NLL + α₁ KL + α₂ IS + α₃ L2` on a batch, with NLL and IS
    /// averaged over rows and realizations and KL averaged over
    /// realizations. Gradients are accumulated into `grads` when given.
    pub(crate) fn batch_loss(
        &self,
        rows: &[&Row<T>],
        realizations: &[Realization<T>],
        config: &ProNdfConfig,
        mut grads: Option<&mut Grads<T>>,
    ) -> Result<LossParts<T>> {
        let w = &config.weights;
        let (a1, a2, a3) = (T::lit(w.alpha1), T::lit(w.alpha2), T::lit(w.alpha3));
        let gamma = T::lit(w.gamma);
        let penalty = T::lit(2.0) / gamma;
        let z = T::lit(Z_SCORE_95);
        let n = rows.len();
        let m = realizations.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let scale = T::one() / (T::from_count(n) * T::from_count(m));
        let ds = self.n_sources();
        let dx = self.schema.dx();
        let net1 = self.block1.network();
        let net3 = &self.block3;
        let mut ws1 = net1.workspace();
        let mut ws3 = net3.workspace();
        let mut buf = Vec::with_capacity(net3.n_inputs());
        let mut grad_in = vec![T::zero(); net3.n_inputs()];
        let zcs = rows
            .iter()
            .map(|r| self.categorical_latent(&r.zeta_c))
            .collect::<Result<Vec<_>>>()?;
        let mut dzc = vec![[T::zero(); 2]; n];
        let mut gtheta = vec![T::zero(); net1.n_params()];
        let mut kl_scratch = Vec::new();
        let (mut nll_sum, mut is_sum, mut kl_sum) = (T::zero(), T::zero(), T::zero());

        for r in realizations {
            let zs = self.source_latents(r, &mut ws1)?;
            let mut dzs = vec![[T::zero(); 2]; ds];
            for (i, row) in rows.iter().enumerate() {
                Self::block3_input(&row.x, zs[row.source], zcs[i], &mut buf);
                let out = net3.forward_with(net3.params(), &buf, &mut ws3)?;
                let mu = out[0];
                let resid = row.y - mu;
                let mut d_out = [T::zero(); 2];
                if self.probabilistic_output {
                    let raw = out[1];
                    let sigma = sigma_from_raw(raw);
                    let s2 = sigma * sigma;
                    nll_sum = nll_sum + T::lit(HALF_LN_2PI) + sigma.ln() + resid * resid / (T::lit(2.0) * s2);
                    let mut dmu = -resid / s2;
                    let mut dsig = T::one() / sigma - resid * resid / (s2 * sigma);
                    if w.alpha2 > 0.0 {
                        let (l, u) = (mu - z * sigma, mu + z * sigma);
                        is_sum = is_sum + super::interval_score_bounds(row.y, l, u, gamma);
                        let mut gmu = T::zero();
                        let mut gsig = T::lit(2.0) * z;
                        if row.y < l {
                            gmu = penalty;
                            gsig = gsig - penalty * z;
                        } else if row.y > u {
                            gmu = -penalty;
                            gsig = gsig - penalty * z;
                        }
                        dmu = dmu + a2 * gmu;
                        dsig = dsig + a2 * gsig;
                    }
                    d_out[0] = scale * dmu;
                    d_out[1] = scale * dsig * sigmoid(raw);
                } else {
                    nll_sum = nll_sum + resid * resid;
                    d_out[0] = scale * T::lit(-2.0) * resid;
                }
                if let Some(g) = grads.as_deref_mut() {
                    let k = if self.probabilistic_output { 2 } else { 1 };
                    net3.backward_with(net3.params(), &mut ws3, &d_out[..k], &mut g.b3, Some(&mut grad_in));
                    let d = &mut dzs[row.source];
                    d[0] = d[0] + grad_in[dx];
                    d[1] = d[1] + grad_in[dx + 1];
                    if zcs[i].is_some() {
                        dzc[i][0] = dzc[i][0] + grad_in[dx + 2];
                        dzc[i][1] = dzc[i][1] + grad_in[dx + 3];
                    }
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                gtheta.iter_mut().for_each(|v| *v = T::zero());
                for (s, d) in dzs.iter().enumerate() {
                    if d[0] == T::zero() && d[1] == T::zero() {
                        continue;
                    }
                    net1.forward_with(&r.theta, &one_hot_source(s, ds)?, &mut ws1)?;
                    net1.backward_with(&r.theta, &mut ws1, d, &mut gtheta, None);
                }
                match &self.block1 {
                    SourceBlock::Variational(v) => v.backprop_realization(r, &gtheta, &mut g.b1),
                    SourceBlock::Deterministic(_) => {
                        for (a, b) in g.b1.iter_mut().zip(&gtheta) {
                            *a = *a + *b;
                        }
                    }
                }
            }
            if let SourceBlock::Variational(v) = &self.block1 {
                if w.alpha1 > 0.0 {
                    let prior = GaussianPrior::new(config.prior_sigma)?;
                    let kscale = a1 / T::from_count(m);
                    let target = match grads.as_deref_mut() {
                        Some(g) => &mut g.b1,
                        None => {
                            kl_scratch.resize(v.n_var_params(), T::zero());
                            &mut kl_scratch
                        }
                    };
                    kl_sum = kl_sum + v.kl_draw(&prior, r, kscale, target);
                }
            }
        }

        if let (Some(net2), Some(g)) = (&self.block2, grads.as_deref_mut()) {
            let mut ws2 = net2.workspace();
            for (row, d) in rows.iter().zip(&dzc) {
                net2.forward_with(net2.params(), &row.zeta_c, &mut ws2)?;
                net2.backward_with(net2.params(), &mut ws2, d, &mut g.b2, None);
            }
        }

        let mut l2 = T::zero();
        if w.alpha3 > 0.0 {
            let two_a3 = T::lit(2.0) * a3;
            let mut add = |params: &[T], g: Option<&mut Vec<T>>| {
                l2 = l2 + params.iter().map(|&p| p * p).sum::<T>();
                if let Some(g) = g {
                    for (gi, &p) in g.iter_mut().zip(params) {
                        *gi = *gi + two_a3 * p;
                    }
                }
            };
            let (g1, g2, g3) = match grads.as_mut() {
                Some(g) => (Some(&mut g.b1), Some(&mut g.b2), Some(&mut g.b3)),
                None => (None, None, None),
            };
            if let SourceBlock::Deterministic(net) = &self.block1 {
                add(net.params(), g1);
            }
            if let Some(net2) = &self.block2 {
                add(net2.params(), g2);
            }
            add(net3.params(), g3);
        }

        let nll = check(nll_sum * scale, "likelihood")?;
        let is = check(is_sum * scale, "interval-score")?;
        let kl = check(kl_sum / T::from_count(m), "KL")?;
        let l2 = check(l2, "L2")?;
        let mut total = nll + a1 * kl + a3 * l2;
        if self.probabilistic_output {
            total = total + a2 * is;
        }
        Ok(LossParts {
            total: check(total, "total")?,
            nll,
            kl,
            interval_score: is,
            l2,
        })
    }
}

/// Mini-batch Adam on the unified multi-source dataset (source 0 = HF).
/// Deterministic for a given `config.train.seed`.
pub fn train<T: Real>(dataset: &MixedDataset<T>, config: &ProNdfConfig) -> Result<(ProNdfModel<T>, Vec<EpochRecord>)> {
    config.validate()?;
    if dataset.is_empty() || dataset.source_counts().first().copied().unwrap_or(0) == 0 {
        return Err(Error::InvalidArgument("training data must contain high-fidelity rows (source 1)".into()));
    }
    let tc = &config.train;
    let standardizer = Standardizer::fit(dataset);
    let mut model = ProNdfModel::init(dataset.schema().clone(), standardizer, config)?;
    model.combinations = dataset.categorical_combinations();
    let rows = model.encode_rows(dataset)?;
    let n = rows.len();

    let adam = AdamConfig::with_learning_rate(tc.learning_rate);
    let mut p1 = model.block1.flat_params();
    let mut s1 = AdamState::new(p1.len());
    let mut s2 = AdamState::new(model.block2.as_ref().map_or(0, |b| b.n_params()));
    let mut s3 = AdamState::new(model.block3.n_params());
    let mut grads = Grads::zeros_like(&model);
    let mut batch_rng = RngStream::new(tc.seed, streams::BATCHES);
    let mut draw_rng = RngStream::new(tc.seed, streams::VARIATIONAL);
    let m_eff = if model.block1.is_variational() { tc.m_train } else { 1 };

    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 0..tc.epochs {
        let order = batch_rng.permutation(n);
        let mut acc = [0.0f64; 5];
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&Row<T>> = chunk.iter().map(|&i| &rows[i]).collect();
            let reals: Vec<Realization<T>> = (0..m_eff).map(|_| model.block1.draw(&mut draw_rng)).collect();
            grads.clear();
            let parts = model
                .batch_loss(&batch, &reals, config, Some(&mut grads))
                .map_err(|e| Error::Diverged {
                    epoch,
                    detail: e.to_string(),
                })?;
            let diverged = |e: Error| Error::Diverged {
                epoch,
                detail: e.to_string(),
            };
            adam_step(&mut p1, &grads.b1, &mut s1, &adam).map_err(diverged)?;
            model.block1.set_flat_params(&p1)?;
            if let Some(b2) = model.block2.as_mut() {
                adam_step(b2.params_mut(), &grads.b2, &mut s2, &adam).map_err(diverged)?;
            }
            adam_step(model.block3.params_mut(), &grads.b3, &mut s3, &adam).map_err(diverged)?;
            let wgt = chunk.len() as f64 / n as f64;
            for (a, v) in acc
                .iter_mut()
                .zip([parts.total, parts.nll, parts.kl, parts.interval_score, parts.l2])
            {
                *a += wgt * v.as_f64();
            }
        }
        let record = EpochRecord {
            epoch,
            loss: acc[0],
            nll: acc[1],
            kl: acc[2],
            interval_score: acc[3],
            l2: acc[4],
        };
        history.push(record);
        if record.loss < best {
            best = record.loss;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.patience {
                break;
            }
        }
    }
    Ok((model, history))
}
