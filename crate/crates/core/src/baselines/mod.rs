//! Comparison methods: one network over the source-augmented inputs (FFNN
//! fusion) and sequential multi-fidelity networks (SMF).

mod regressor;

use serde::{Deserialize, Serialize};

use crate::data::{one_hot_encode, one_hot_source, validate_input, MixedDataset, MixedInput, Schema, Standardizer};
use crate::error::{Error, Result};
use crate::neural::Network;
use crate::numerics::{streams, Real, RngStream};

pub use regressor::FfnnConfig;
use regressor::train_regressor;

/// A single network on `[x, ζ(t^s), ζ(t^c)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FfnnFusionModel<T> {
    pub schema: Schema,
    pub standardizer: Standardizer<T>,
    pub network: Network<T>,
}

impl<T: Real> FfnnFusionModel<T> {
    fn features(schema: &Schema, standardizer: &Standardizer<T>, input: &MixedInput<T>) -> Result<Vec<T>> {
        validate_input(schema, input)?;
        let mut f = standardizer.transform_x(&input.x)?;
        f.extend(one_hot_source::<T>(input.source, schema.n_sources)?);
        f.extend(one_hot_encode::<T>(&input.tc, schema)?);
        Ok(f)
    }

    pub fn fit(dataset: &MixedDataset<T>, config: &FfnnConfig) -> Result<(Self, Vec<f64>)> {
        if dataset.is_empty() {
            return Err(Error::InvalidArgument("FFNN fusion needs training rows".into()));
        }
        let schema = dataset.schema().clone();
        let standardizer = Standardizer::fit(dataset);
        let features = dataset
            .rows()
            .iter()
            .map(|r| Self::features(&schema, &standardizer, &r.input))
            .collect::<Result<Vec<_>>>()?;
        let targets: Vec<T> = dataset.rows().iter().map(|r| standardizer.transform_y(r.y)).collect();
        let (network, history) = train_regressor(&features, &targets, config, 0)?;
        Ok((
            Self {
                schema,
                standardizer,
                network,
            },
            history,
        ))
    }

    pub fn predict(&self, input: &MixedInput<T>) -> Result<T> {
        let f = Self::features(&self.schema, &self.standardizer, input)?;
        Ok(self.standardizer.invert_y(self.network.forward(&f)?[0]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmfConfig {
    /// One config per network in chain order; a single entry is shared by
    /// every network.
    pub stages: Vec<FfnnConfig>,
    /// Whether the final (HF) network also sees the original inputs.
    pub use_raw_inputs_in_final: bool,
    pub seed: u64,
}

impl Default for SmfConfig {
    fn default() -> Self {
        Self {
            stages: vec![FfnnConfig::default()],
            use_raw_inputs_in_final: true,
            seed: 0,
        }
    }
}

impl SmfConfig {
    fn stage(&self, i: usize) -> Result<&FfnnConfig> {
        match self.stages.len() {
            0 => Err(Error::InvalidArgument("SMF needs at least one stage config".into())),
            1 => Ok(&self.stages[0]),
            _ => self.stages.get(i).ok_or_else(|| {
                Error::InvalidArgument(format!("SMF stage {i} has no config ({} given)", self.stages.len()))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SmfStage<T> {
    pub source: usize,
    pub uses_raw_inputs: bool,
    pub uses_previous: bool,
    pub scaler: Standardizer<T>,
    pub network: Network<T>,
}

/// Sequential multi-fidelity chain. LF sources come first in a seeded
/// random order; the HF network is last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SmfModel<T> {
    pub schema: Schema,
    pub stages: Vec<SmfStage<T>>,
}

/// Training order of the LF sources `1..ds`, a seeded permutation.
pub fn smf_order(n_sources: usize, seed: u64) -> Vec<usize> {
    let mut rng = RngStream::new(seed, streams::ORDERING);
    rng.permutation(n_sources.saturating_sub(1)).into_iter().map(|i| i + 1).collect()
}

fn base_features<T: Real>(schema: &Schema, input: &MixedInput<T>) -> Result<Vec<T>> {
    let mut f = input.x.clone();
    f.extend(one_hot_encode::<T>(&input.tc, schema)?);
    Ok(f)
}

fn stage_features<T: Real>(uses_raw: bool, base: &[T], previous: Option<T>) -> Vec<T> {
    let mut f = if uses_raw { base.to_vec() } else { Vec::new() };
    f.extend(previous);
    f
}

impl<T: Real> SmfStage<T> {
    fn predict_raw(&self, base: &[T], previous: Option<T>) -> Result<T> {
        let f = self.scaler.transform_x(&stage_features(self.uses_raw_inputs, base, previous))?;
        Ok(self.scaler.invert_y(self.network.forward(&f)?[0]))
    }
}

impl<T: Real> SmfModel<T> {
    pub fn fit(dataset: &MixedDataset<T>, config: &SmfConfig) -> Result<(Self, Vec<Vec<f64>>)> {
        let schema = dataset.schema().clone();
        let ds = schema.n_sources;
        if ds < 2 {
            return Err(Error::InvalidArgument("SMF requires ≥2 sources".into()));
        }
        let mut order = smf_order(ds, config.seed);
        order.push(0);
        let mut stages: Vec<SmfStage<T>> = Vec::with_capacity(ds);
        let mut histories = Vec::with_capacity(ds);
        for (i, &source) in order.iter().enumerate() {
            let rows = dataset.source_subset(source);
            if rows.is_empty() {
                return Err(Error::InvalidArgument(format!("source {} has no rows", source + 1)));
            }
            let uses_raw_inputs = i + 1 < order.len() || config.use_raw_inputs_in_final;
            let mut raw = Vec::with_capacity(rows.len());
            for r in rows.rows() {
                let base = base_features(&schema, &r.input)?;
                let prev = Self::chain(&stages, &base)?;
                raw.push(stage_features(uses_raw_inputs, &base, prev));
            }
            let targets: Vec<T> = rows.rows().iter().map(|r| r.y).collect();
            let scaler = Standardizer::from_columns(&raw, &targets);
            let features = raw.iter().map(|f| scaler.transform_x(f)).collect::<Result<Vec<_>>>()?;
            let std_targets: Vec<T> = targets.iter().map(|&y| scaler.transform_y(y)).collect();
            let stage_config = FfnnConfig {
                seed: config.seed,
                ..config.stage(i)?.clone()
            };
            let (network, history) = train_regressor(&features, &std_targets, &stage_config, i as u64)?;
            stages.push(SmfStage {
                source,
                uses_raw_inputs,
                uses_previous: i > 0,
                scaler,
                network,
            });
            histories.push(history);
        }
        Ok((Self { schema, stages }, histories))
    }

    fn chain(stages: &[SmfStage<T>], base: &[T]) -> Result<Option<T>> {
        let mut prev = None;
        for s in stages {
            prev = Some(s.predict_raw(base, prev)?);
        }
        Ok(prev)
    }

    /// Order in which sources were trained (0-based, HF last).
    pub fn order(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.source).collect()
    }

    /// HF prediction: the input is fed through the whole chain.
    pub fn predict(&self, input: &MixedInput<T>) -> Result<T> {
        let mut probe = input.clone();
        probe.source = 0;
        validate_input(&self.schema, &probe)?;
        let base = base_features(&self.schema, input)?;
        Ok(Self::chain(&self.stages, &base)?.expect("at least one stage"))
    }
}

#[cfg(test)]
mod tests;
