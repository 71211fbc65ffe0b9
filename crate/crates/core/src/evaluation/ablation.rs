use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::models::{fit_model, FittedModel, ModelConfig};
use crate::data::MixedDataset;
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::prondf::ProNdfConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVersion {
    Base,
    V1,
    V2,
    V3,
    V4,
}

impl AblationVersion {
    pub const ALL: [AblationVersion; 5] = [Self::Base, Self::V1, Self::V2, Self::V3, Self::V4];

    /// Configuration of the variant. V4 shares Base's configuration and
    /// differs only in its data.
    pub fn config(self, base: &ProNdfConfig) -> ProNdfConfig {
        let mut c = base.clone();
        match self {
            Self::Base | Self::V4 => {}
            Self::V1 => c.weights.alpha2 = 0.0,
            Self::V2 => c.probabilistic_block1 = false,
            Self::V3 => {
                c.weights.alpha2 = 0.0;
                c.probabilistic_output = false;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub version: AblationVersion,
    pub interval_score_loss: bool,
    pub probabilistic_block1: bool,
    pub probabilistic_output: bool,
    /// 1-based LF source left out (V4 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_source: Option<usize>,
    pub metrics: MetricsReport,
}

/// LF source (0-based) with the largest mean fidelity-manifold distance
/// from HF; ties go to the lower index.
pub fn farthest_source(distances: &[f64]) -> Option<usize> {
    distances
        .iter()
        .enumerate()
        .skip(1)
        .fold(None, |best: Option<(usize, f64)>, (i, &d)| match best {
            Some((_, bd)) if bd >= d => best,
            _ => Some((i, d)),
        })
        .map(|(i, _)| i)
}

fn evaluate<T: Real>(model: &FittedModel<T>, test: &MixedDataset<T>) -> Result<MetricsReport> {
    MetricsReport::from_predictions(&model.predict_many(&test.inputs())?, &test.targets())
}

/// Runs Base and V1-V4 on `train` and scores them on the HF `test` rows.
/// V4 drops the LF source farthest from HF in Base's fidelity manifold,
/// estimated from `manifold_m` realizations.
pub fn run_ablation<T: Real>(
    base: &ProNdfConfig,
    train: &MixedDataset<T>,
    test: &MixedDataset<T>,
    manifold_m: usize,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(5);
    let mut dists = None;
    for version in AblationVersion::ALL {
        let config = version.config(base);
        let (data, dropped) = if version == AblationVersion::V4 {
            let d: &Vec<f64> = dists.as_ref().expect("Base runs first");
            let drop = farthest_source(d)
                .ok_or_else(|| Error::InvalidArgument("V4 needs at least one LF source".into()))?;
            let keep: Vec<usize> = (0..train.n_sources()).filter(|&s| s != drop).collect();
            (train.retain_sources(&keep)?, Some(drop + 1))
        } else {
            (train.clone(), None)
        };
        let (model, _) = fit_model(&ModelConfig::ProNdf(config.clone()), &data)?;
        if version == AblationVersion::Base {
            if let FittedModel::ProNdf { model, .. } = &model {
                dists = Some(model.fidelity_distances(manifold_m, config.train.seed)?);
            }
        }
        rows.push(AblationRow {
            version,
            interval_score_loss: config.probabilistic_output && config.weights.alpha2 > 0.0,
            probabilistic_block1: config.probabilistic_block1,
            probabilistic_output: config.probabilistic_output,
            dropped_source: dropped,
            metrics: evaluate(&model, test)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: super::ModelKind,
    pub metrics: MetricsReport,
}

/// Fits each configuration on `train` and scores it on `test`.
pub fn compare<T: Real>(
    configs: &[ModelConfig],
    train: &MixedDataset<T>,
    test: &MixedDataset<T>,
) -> Result<Vec<ComparisonRow>> {
    configs
        .iter()
        .map(|c| {
            let (model, _) = fit_model(c, train)?;
            Ok(ComparisonRow {
                model: c.kind(),
                metrics: evaluate(&model, test)?,
            })
        })
        .collect()
}
