use serde::{Deserialize, Serialize};

use super::dataset::{MixedDataset, MixedInput, Sample};
use crate::error::{Error, Result};
use crate::numerics::Real;

/// Affine map to zero mean / unit population standard deviation for the
/// numeric inputs and the output. Constant columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Standardizer<T> {
    pub x_shift: Vec<T>,
    pub x_scale: Vec<T>,
    pub y_shift: T,
    pub y_scale: T,
}

fn shift_scale<T: Real>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = values.clone().count();
    if n == 0 {
        return (T::zero(), T::one());
    }
    let nf = T::from_count(n);
    let mean = values.clone().sum::<T>() / nf;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<T>() / nf;
    let std = var.sqrt();
    // relative threshold so that rounding noise on a constant column stays 1
    let tiny = T::epsilon() * T::lit(16.0) * mean.abs().max(T::one());
    (mean, if std > tiny { std } else { T::one() })
}

impl<T: Real> Standardizer<T> {
    pub fn identity(dx: usize) -> Self {
        Self {
            x_shift: vec![T::zero(); dx],
            x_scale: vec![T::one(); dx],
            y_shift: T::zero(),
            y_scale: T::one(),
        }
    }

    pub fn fit(dataset: &MixedDataset<T>) -> Self {
        let dx = dataset.schema().dx();
        let rows = dataset.rows();
        let (x_shift, x_scale) = (0..dx)
            .map(|j| shift_scale(rows.iter().map(move |r| r.input.x[j])))
            .unzip();
        let (y_shift, y_scale) = shift_scale(rows.iter().map(|r| r.y));
        Self {
            x_shift,
            x_scale,
            y_shift,
            y_scale,
        }
    }

    /// Fits on raw feature rows (all of equal length) and targets.
    pub fn from_columns(features: &[Vec<T>], targets: &[T]) -> Self {
        let dx = features.first().map_or(0, |f| f.len());
        let (x_shift, x_scale) = (0..dx)
            .map(|j| shift_scale(features.iter().map(move |f| f[j])))
            .unzip();
        let (y_shift, y_scale) = shift_scale(targets.iter().copied());
        Self {
            x_shift,
            x_scale,
            y_shift,
            y_scale,
        }
    }

    pub fn dx(&self) -> usize {
        self.x_shift.len()
    }

    pub fn transform_x(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dx() {
            return Err(Error::DimensionMismatch {
                context: "Standardizer::transform_x",
                expected: self.dx(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.x_shift.iter().zip(&self.x_scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect())
    }

    pub fn invert_x(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.x_shift.iter().zip(&self.x_scale))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect()
    }

    #[inline]
    pub fn transform_y(&self, y: T) -> T {
        (y - self.y_shift) / self.y_scale
    }

    #[inline]
    pub fn invert_y(&self, y: T) -> T {
        y * self.y_scale + self.y_shift
    }

    /// Maps a variance in standardized output units back to original units.
    #[inline]
    pub fn invert_variance(&self, v: T) -> T {
        v * self.y_scale * self.y_scale
    }

    pub fn transform_input(&self, input: &MixedInput<T>) -> Result<MixedInput<T>> {
        Ok(MixedInput::new(self.transform_x(&input.x)?, input.tc.clone(), input.source))
    }

    pub fn apply(&self, dataset: &MixedDataset<T>) -> Result<MixedDataset<T>> {
        let rows = dataset
            .rows()
            .iter()
            .map(|r| {
                Ok(Sample {
                    input: self.transform_input(&r.input)?,
                    y: self.transform_y(r.y),
                })
            })
            .collect::<Result<_>>()?;
        MixedDataset::new(dataset.schema().clone(), rows)
    }

    pub fn invert(&self, dataset: &MixedDataset<T>) -> Result<MixedDataset<T>> {
        let rows = dataset
            .rows()
            .iter()
            .map(|r| Sample {
                input: MixedInput::new(self.invert_x(&r.input.x), r.input.tc.clone(), r.input.source),
                y: self.invert_y(r.y),
            })
            .collect();
        MixedDataset::new(dataset.schema().clone(), rows)
    }
}
