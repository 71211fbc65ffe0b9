use serde::{Deserialize, Serialize};

use super::schema::Schema;
use crate::error::{Error, Result};
use crate::numerics::{streams, Real, RngStream};

/// One mixed-variable input. Categorical levels and the source index are
/// 0-based internally; source 0 is the high-fidelity source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MixedInput<T> {
    pub x: Vec<T>,
    pub tc: Vec<usize>,
    pub source: usize,
}

impl<T: Real> MixedInput<T> {
    pub fn new(x: Vec<T>, tc: Vec<usize>, source: usize) -> Self {
        Self { x, tc, source }
    }

    pub fn numeric(x: Vec<T>, source: usize) -> Self {
        Self::new(x, Vec::new(), source)
    }

    pub fn with_source(&self, source: usize) -> Self {
        Self {
            source,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Sample<T> {
    pub input: MixedInput<T>,
    pub y: T,
}

/// Rows from one or more sources sharing a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MixedDataset<T> {
    schema: Schema,
    rows: Vec<Sample<T>>,
}

impl<T: Real> MixedDataset<T> {
    pub fn new(schema: Schema, rows: Vec<Sample<T>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            validate_input(&schema, &row.input).map_err(|e| match e {
                Error::Schema(msg) => Error::Schema(format!("row {i}: {msg}")),
                other => other,
            })?;
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Sample<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_sources(&self) -> usize {
        self.schema.n_sources
    }

    /// `n^(i)` for every source.
    pub fn source_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.n_sources];
        for r in &self.rows {
            counts[r.input.source] += 1;
        }
        counts
    }

    pub fn inputs(&self) -> Vec<MixedInput<T>> {
        self.rows.iter().map(|r| r.input.clone()).collect()
    }

    pub fn targets(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.y).collect()
    }

    /// Rows belonging to `source`, keeping the schema.
    pub fn source_subset(&self, source: usize) -> Self {
        self.filter(|r| r.input.source == source)
    }

    pub fn filter(&self, mut keep: impl FnMut(&Sample<T>) -> bool) -> Self {
        Self {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Keeps only the listed sources and renumbers them in the given order.
    pub fn retain_sources(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&s| s >= self.schema.n_sources) {
            return Err(Error::InvalidArgument(format!("source {} does not exist", bad + 1)));
        }
        let mut schema = self.schema.clone();
        schema.n_sources = keep.len();
        let rows = self
            .rows
            .iter()
            .filter_map(|r| {
                keep.iter().position(|&s| s == r.input.source).map(|new| Sample {
                    input: r.input.with_source(new),
                    y: r.y,
                })
            })
            .collect();
        Ok(Self { schema, rows })
    }

    /// Re-expresses this dataset in `target`'s level numbering. Column names
    /// must agree; a level or source unknown to `target` is an error.
    pub fn conform_to(&self, target: &Schema) -> Result<Self> {
        self.schema.check_compatible(target)?;
        let maps: Vec<Vec<usize>> = self
            .schema
            .categorical
            .iter()
            .zip(&target.categorical)
            .map(|(ours, theirs)| {
                ours.levels
                    .iter()
                    .map(|l| theirs.level_index(l))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            if r.input.source >= target.n_sources {
                return Err(Error::UnseenLevel {
                    variable: "source".into(),
                    level: (r.input.source + 1).to_string(),
                });
            }
            let tc = r.input.tc.iter().zip(&maps).map(|(&l, m)| m[l]).collect();
            rows.push(Sample {
                input: MixedInput::new(r.input.x.clone(), tc, r.input.source),
                y: r.y,
            });
        }
        Ok(Self {
            schema: target.clone(),
            rows,
        })
    }

    /// Distinct categorical combinations in first-appearance order.
    pub fn categorical_combinations(&self) -> Vec<Vec<usize>> {
        let mut seen: Vec<Vec<usize>> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.input.tc) {
                seen.push(r.input.tc.clone());
            }
        }
        seen
    }
}

/// Checks an input against a schema.
pub fn validate_input<T: Real>(schema: &Schema, input: &MixedInput<T>) -> Result<()> {
    if input.x.len() != schema.dx() {
        return Err(Error::Schema(format!(
            "expected {} numeric inputs, got {}",
            schema.dx(),
            input.x.len()
        )));
    }
    if input.tc.len() != schema.dt() {
        return Err(Error::Schema(format!(
            "expected {} categorical inputs, got {}",
            schema.dt(),
            input.tc.len()
        )));
    }
    for (&level, var) in input.tc.iter().zip(&schema.categorical) {
        if level >= var.levels.len() {
            return Err(Error::UnseenLevel {
                variable: var.name.clone(),
                level: format!("#{}", level + 1),
            });
        }
    }
    if input.source >= schema.n_sources {
        return Err(Error::UnseenLevel {
            variable: "source".into(),
            level: (input.source + 1).to_string(),
        });
    }
    Ok(())
}

/// Concatenates per-source datasets into one, tagging every row with the
/// position of its dataset in `sources` (position 0 = high fidelity).
/// Categorical level sets are merged in first-appearance order.
pub fn augment_with_source<T: Real>(sources: &[MixedDataset<T>]) -> Result<MixedDataset<T>> {
    let first = sources
        .first()
        .ok_or_else(|| Error::InvalidArgument("no source datasets".into()))?;
    let mut schema = first.schema.clone();
    for s in &sources[1..] {
        schema.check_compatible(&s.schema)?;
    }
    for (var_idx, var) in schema.categorical.iter_mut().enumerate() {
        for s in &sources[1..] {
            for label in &s.schema.categorical[var_idx].levels {
                var.intern(label);
            }
        }
    }
    schema.n_sources = sources.len();
    let mut rows = Vec::with_capacity(sources.iter().map(MixedDataset::len).sum());
    for (source, ds) in sources.iter().enumerate() {
        let maps: Vec<Vec<usize>> = ds
            .schema
            .categorical
            .iter()
            .zip(&schema.categorical)
            .map(|(local, merged)| local.levels.iter().map(|l| merged.level_index(l)).collect())
            .collect::<Result<_>>()?;
        rows.extend(ds.rows.iter().map(|r| Sample {
            input: MixedInput::new(
                r.input.x.clone(),
                r.input.tc.iter().zip(&maps).map(|(&l, m)| m[l]).collect(),
                source,
            ),
            y: r.y,
        }));
    }
    MixedDataset::new(schema, rows)
}

/// Per-source stratified split. Each source keeps
/// `round(n_i·(1−holdout))` rows (clamped to `1..n_i−1`) for training.
pub fn split<T: Real>(
    dataset: &MixedDataset<T>,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(MixedDataset<T>, MixedDataset<T>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {holdout_fraction} not in (0, 1)"
        )));
    }
    let mut rng = RngStream::new(seed, streams::SPLIT);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for source in 0..dataset.n_sources() {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.rows[i].input.source == source)
            .collect();
        let n = idx.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "source {} has {n} rows; at least 2 are needed to split",
                source + 1
            )));
        }
        let n_train = ((n as f64) * (1.0 - holdout_fraction)).round() as usize;
        let n_train = n_train.clamp(1, n - 1);
        rng.shuffle(&mut idx);
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((dataset.select(&train_idx), dataset.select(&test_idx)))
}
