use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::Prediction;
use crate::baselines::{FfnnConfig, FfnnFusionModel, SmfConfig, SmfModel};
use crate::data::{MixedDataset, MixedInput};
use crate::error::{Error, Result};
use crate::lmgp::{self, LmgpConfig, LmgpModel};
use crate::numerics::Real;
use crate::data::Schema;
use crate::prondf::{self, CategoricalPoint, FidelityPoint, ProNdfConfig, ProNdfModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    ProNdf,
    Lmgp,
    Ffnn,
    Smf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::ProNdf, ModelKind::Lmgp, ModelKind::Ffnn, ModelKind::Smf];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ProNdf => "prondf",
            ModelKind::Lmgp => "lmgp",
            ModelKind::Ffnn => "ffnn",
            ModelKind::Smf => "smf",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind '{s}' (expected prondf, lmgp, ffnn or smf)")))
    }
}

/// Hyperparameters of any model kind, tagged by `kind` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    ProNdf(ProNdfConfig),
    Lmgp(LmgpConfig),
    Ffnn(FfnnConfig),
    Smf(SmfConfig),
}

impl ModelConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::ProNdf => ModelConfig::ProNdf(ProNdfConfig::default()),
            ModelKind::Lmgp => ModelConfig::Lmgp(LmgpConfig::default()),
            ModelKind::Ffnn => ModelConfig::Ffnn(FfnnConfig::default()),
            ModelKind::Smf => ModelConfig::Smf(SmfConfig::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::ProNdf(_) => ModelKind::ProNdf,
            ModelConfig::Lmgp(_) => ModelKind::Lmgp,
            ModelConfig::Ffnn(_) => ModelKind::Ffnn,
            ModelConfig::Smf(_) => ModelKind::Smf,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelConfig::ProNdf(c) => c.train.seed,
            ModelConfig::Lmgp(c) => c.seed,
            ModelConfig::Ffnn(c) => c.seed,
            ModelConfig::Smf(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ModelConfig::ProNdf(c) => c.train.seed = seed,
            ModelConfig::Lmgp(c) => c.seed = seed,
            ModelConfig::Ffnn(c) => c.seed = seed,
            ModelConfig::Smf(c) => {
                c.seed = seed;
                c.stages.iter_mut().for_each(|s| s.seed = seed);
            }
        }
    }
}

/// Per-epoch (or per-fit) training log as a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl History {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        let col = self.columns.iter().position(|c| c == "loss" || c == "nll")?;
        self.rows.last().map(|r| r[col])
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Real")]
pub enum FittedModel<T: Real> {
    ProNdf { model: ProNdfModel<T>, m_pred: usize, seed: u64 },
    Lmgp { model: LmgpModel<T> },
    Ffnn { model: FfnnFusionModel<T> },
    Smf { model: SmfModel<T> },
}

impl<T: Real> FittedModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::ProNdf { .. } => ModelKind::ProNdf,
            FittedModel::Lmgp { .. } => ModelKind::Lmgp,
            FittedModel::Ffnn { .. } => ModelKind::Ffnn,
            FittedModel::Smf { .. } => ModelKind::Smf,
        }
    }

    pub fn schema(&self) -> &Schema {
        match self {
            FittedModel::ProNdf { model, .. } => &model.schema,
            FittedModel::Lmgp { model } => model.schema(),
            FittedModel::Ffnn { model } => &model.schema,
            FittedModel::Smf { model } => &model.schema,
        }
    }

    /// Fidelity manifold: `m` realizations per source for Pro-NDF, the
    /// single latent point per source for LMGP.
    pub fn fidelity_manifold(&self, m: usize, seed: u64) -> Result<Vec<FidelityPoint>> {
        match self {
            FittedModel::ProNdf { model, .. } => model.export_fidelity_manifold(m, seed),
            FittedModel::Lmgp { model } => (0..model.schema().n_sources)
                .map(|s| {
                    let z = model.source_latent(s)?;
                    Ok(FidelityPoint {
                        source: s + 1,
                        realization: 1,
                        z1: z[0].as_f64(),
                        z2: z[1].as_f64(),
                    })
                })
                .collect(),
            _ => Err(Error::Unsupported(format!("{} has no fidelity manifold", self.kind()))),
        }
    }

    pub fn categorical_manifold(&self) -> Result<Vec<CategoricalPoint>> {
        match self {
            FittedModel::ProNdf { model, .. } => model.export_categorical_manifold(),
            FittedModel::Lmgp { model } => {
                let schema = model.schema();
                if schema.dt() == 0 {
                    return Err(Error::Unsupported("no categorical inputs".into()));
                }
                let mut combos: Vec<&Vec<usize>> = Vec::new();
                for p in &model.params().train_inputs {
                    if !combos.contains(&&p.tc) {
                        combos.push(&p.tc);
                    }
                }
                combos
                    .into_iter()
                    .map(|tc| {
                        let z = model.categorical_latent(tc)?;
                        Ok(CategoricalPoint {
                            combo: prondf::combo_label(schema, tc),
                            z1: z[0].as_f64(),
                            z2: z[1].as_f64(),
                        })
                    })
                    .collect()
            }
            _ => Err(Error::Unsupported(format!("{} has no categorical manifold", self.kind()))),
        }
    }

    pub fn predict_many(&self, inputs: &[MixedInput<T>]) -> Result<Vec<Prediction<T>>> {
        let with_var = |v: Vec<(T, T)>| {
            v.into_iter()
                .map(|(mean, var)| Prediction {
                    mean,
                    variance: Some(var),
                })
                .collect()
        };
        let point = |mean| Prediction { mean, variance: None };
        Ok(match self {
            FittedModel::ProNdf { model, m_pred, seed } => with_var(model.predict_many(inputs, *m_pred, *seed)?),
            FittedModel::Lmgp { model } => with_var(model.predict_many(inputs)?),
            FittedModel::Ffnn { model } => inputs.iter().map(|p| model.predict(p).map(point)).collect::<Result<_>>()?,
            FittedModel::Smf { model } => inputs.iter().map(|p| model.predict(p).map(point)).collect::<Result<_>>()?,
        })
    }
}

/// Fits any model kind on `data` and returns it with its training log.
pub fn fit_model<T: Real>(config: &ModelConfig, data: &MixedDataset<T>) -> Result<(FittedModel<T>, History)> {
    match config {
        ModelConfig::ProNdf(c) => {
            let (model, records) = prondf::train(data, c)?;
            let mut h = History::new(&["epoch", "loss", "nll", "kl", "interval_score", "l2"]);
            h.rows = records
                .iter()
                .map(|r| vec![r.epoch as f64, r.loss, r.nll, r.kl, r.interval_score, r.l2])
                .collect();
            Ok((
                FittedModel::ProNdf {
                    model,
                    m_pred: c.train.m_pred,
                    seed: c.train.seed,
                },
                h,
            ))
        }
        ModelConfig::Lmgp(c) => {
            let model = lmgp::fit(data, c)?;
            let mut h = History::new(&["nll"]);
            h.rows.push(vec![model.neg_log_likelihood(data)?.as_f64()]);
            Ok((FittedModel::Lmgp { model }, h))
        }
        ModelConfig::Ffnn(c) => {
            let (model, losses) = FfnnFusionModel::fit(data, c)?;
            let mut h = History::new(&["epoch", "loss"]);
            h.rows = losses.iter().enumerate().map(|(e, &l)| vec![e as f64, l]).collect();
            Ok((FittedModel::Ffnn { model }, h))
        }
        ModelConfig::Smf(c) => {
            let (model, losses) = SmfModel::fit(data, c)?;
            let mut h = History::new(&["stage", "source", "epoch", "loss"]);
            for (i, (stage, l)) in model.stages.iter().zip(&losses).enumerate() {
                for (e, &v) in l.iter().enumerate() {
                    h.rows.push(vec![i as f64, (stage.source + 1) as f64, e as f64, v]);
                }
            }
            Ok((FittedModel::Smf { model }, h))
        }
    }
}
