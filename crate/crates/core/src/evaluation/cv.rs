use crate::data::MixedDataset;
use crate::error::{Error, Result};
use crate::numerics::{streams, Real, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct Fold<T: Real> {
    pub train: MixedDataset<T>,
    pub validation: MixedDataset<T>,
}

/// Splits the HF rows (source 0) into `k` folds of near-equal size. Every
/// training split keeps all LF rows.
pub fn kfold<T: Real>(dataset: &MixedDataset<T>, k: usize, seed: u64) -> Result<Vec<Fold<T>>> {
    let hf: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.rows()[i].input.source == 0).collect();
    if k < 2 {
        return Err(Error::InvalidArgument("k-fold needs k ≥ 2".into()));
    }
    if hf.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} high-fidelity rows cannot fill {k} folds",
            hf.len()
        )));
    }
    let perm = RngStream::new(seed, streams::FOLDS).permutation(hf.len());
    let mut fold_of = vec![usize::MAX; dataset.len()];
    let (base, extra) = (hf.len() / k, hf.len() % k);
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &p in &perm[pos..pos + size] {
            fold_of[hf[p]] = f;
        }
        pos += size;
    }
    Ok((0..k)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| fold_of[i] == f);
            Fold {
                train: dataset.select(&train),
                validation: dataset.select(&valid),
            }
        })
        .collect())
}
