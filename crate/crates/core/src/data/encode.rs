use super::schema::Schema;
use crate::error::{Error, Result};
use crate::numerics::Real;

/// One-hot prior representation `ζ(t)`: one block of length `τ_i` per
/// categorical variable, concatenated in variable order. Levels are 0-based.
pub fn one_hot_encode<T: Real>(tc: &[usize], schema: &Schema) -> Result<Vec<T>> {
    if tc.len() != schema.dt() {
        return Err(Error::DimensionMismatch {
            context: "one_hot_encode",
            expected: schema.dt(),
            actual: tc.len(),
        });
    }
    let mut out = vec![T::zero(); schema.one_hot_len()];
    let mut offset = 0;
    for (&level, var) in tc.iter().zip(&schema.categorical) {
        if level >= var.levels.len() {
            return Err(Error::UnseenLevel {
                variable: var.name.clone(),
                level: format!("#{}", level + 1),
            });
        }
        out[offset + level] = T::one();
        offset += var.levels.len();
    }
    Ok(out)
}

/// One-hot encoding of a source index among `n_sources`.
pub fn one_hot_source<T: Real>(source: usize, n_sources: usize) -> Result<Vec<T>> {
    if source >= n_sources {
        return Err(Error::UnseenLevel {
            variable: "source".into(),
            level: (source + 1).to_string(),
        });
    }
    let mut out = vec![T::zero(); n_sources];
    out[source] = T::one();
    Ok(out)
}
