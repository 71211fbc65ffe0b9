use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalVariable {
    pub name: String,
    /// Level labels in first-appearance order; a level's index is its position.
    pub levels: Vec<String>,
}

impl CategoricalVariable {
    pub fn new(name: impl Into<String>, levels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            levels,
        }
    }

    pub fn level_index(&self, label: &str) -> Result<usize> {
        self.levels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnseenLevel {
                variable: self.name.clone(),
                level: label.to_owned(),
            })
    }

    /// Index of `label`, appending it as a new level when absent.
    pub fn intern(&mut self, label: &str) -> usize {
        match self.levels.iter().position(|l| l == label) {
            Some(i) => i,
            None => {
                self.levels.push(label.to_owned());
                self.levels.len() - 1
            }
        }
    }
}

/// Column layout shared by every row of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub numeric: Vec<String>,
    pub categorical: Vec<CategoricalVariable>,
    pub n_sources: usize,
}

impl Schema {
    pub fn new(numeric: Vec<String>, categorical: Vec<CategoricalVariable>, n_sources: usize) -> Self {
        Self {
            numeric,
            categorical,
            n_sources,
        }
    }

    /// Purely numeric schema with columns `x1..x{dx}`.
    pub fn numeric_only(dx: usize, n_sources: usize) -> Self {
        Self::new((1..=dx).map(|i| format!("x{i}")).collect(), Vec::new(), n_sources)
    }

    pub fn dx(&self) -> usize {
        self.numeric.len()
    }

    pub fn dt(&self) -> usize {
        self.categorical.len()
    }

    /// Total one-hot length `Σ τ_i`.
    pub fn one_hot_len(&self) -> usize {
        self.categorical.iter().map(|c| c.levels.len()).sum()
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.categorical.iter().map(|c| c.levels.len()).collect()
    }

    /// Checks that the column names agree, naming the first conflict.
    pub fn check_compatible(&self, other: &Schema) -> Result<()> {
        if self.numeric.len() != other.numeric.len() {
            return Err(Error::Schema(format!(
                "numeric column count differs: {} vs {}",
                self.numeric.len(),
                other.numeric.len()
            )));
        }
        for (a, b) in self.numeric.iter().zip(&other.numeric) {
            if a != b {
                return Err(Error::Schema(format!("conflicting numeric column `{a}` vs `{b}`")));
            }
        }
        if self.categorical.len() != other.categorical.len() {
            return Err(Error::Schema(format!(
                "categorical column count differs: {} vs {}",
                self.categorical.len(),
                other.categorical.len()
            )));
        }
        for (a, b) in self.categorical.iter().zip(&other.categorical) {
            if a.name != b.name {
                return Err(Error::Schema(format!(
                    "conflicting categorical column `{}` vs `{}`",
                    a.name, b.name
                )));
            }
        }
        Ok(())
    }
}
