use serde::{Deserialize, Serialize};

use super::cv::kfold;
use super::metrics::mse;
use super::models::{fit_model, ModelConfig};
use crate::baselines::FfnnConfig;
use crate::data::MixedDataset;
use crate::error::{Error, Result};
use crate::numerics::{streams, Real, RngStream};

/// Ranges of the random hyperparameter search. Log-uniform ranges are
/// `(lo, hi)` with `0 < lo ≤ hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Inclusive range of hidden layer counts.
    pub layers: (usize, usize),
    pub widths: Vec<usize>,
    /// Adam learning rate of the networks.
    pub learning_rate: (f64, f64),
    pub lmgp_learning_rate: (f64, f64),
    /// Weights of the KL, interval-score and L2 terms.
    pub alpha_kl: (f64, f64),
    pub alpha_is: (f64, f64),
    pub alpha_l2: (f64, f64),
    /// Weight decay of the FFNN and SMF baselines.
    pub beta: (f64, f64),
    pub prior_sigma: (f64, f64),
    pub batch_sizes: Vec<usize>,
    pub folds: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            layers: (1, 4),
            widths: vec![8, 16, 32, 64],
            learning_rate: (1e-3, 1e-2),
            lmgp_learning_rate: (1e-2, 1e-1),
            alpha_kl: (1e-3, 1e-1),
            alpha_is: (1e-2, 1e0),
            alpha_l2: (1e-6, 1e-3),
            beta: (1e-6, 1e-3),
            prior_sigma: (1e-1, 1e1),
            batch_sizes: vec![8, 16, 32, 64],
            folds: 5,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let log_ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if self.layers.0 == 0
            || self.layers.0 > self.layers.1
            || self.widths.is_empty()
            || self.widths.contains(&0)
            || self.batch_sizes.is_empty()
            || self.batch_sizes.contains(&0)
            || ![
                self.learning_rate,
                self.lmgp_learning_rate,
                self.alpha_kl,
                self.alpha_is,
                self.alpha_l2,
                self.beta,
                self.prior_sigma,
            ]
            .into_iter()
            .all(log_ok)
        {
            return Err(Error::InvalidArgument("malformed search space".into()));
        }
        Ok(())
    }
}

struct Sampler<'a> {
    rng: RngStream,
    space: &'a SearchSpace,
}

impl Sampler<'_> {
    fn log_uniform(&mut self, (lo, hi): (f64, f64)) -> f64 {
        let u: f64 = self.rng.uniform();
        10f64.powf(lo.log10() + u * (hi.log10() - lo.log10())).clamp(lo, hi)
    }

    fn choice(&mut self, items: &[usize]) -> usize {
        items[self.rng.index(items.len())]
    }

    fn hidden(&mut self) -> Vec<usize> {
        let space = self.space;
        let (lo, hi) = space.layers;
        let layers = lo + self.rng.index(hi - lo + 1);
        let width = self.choice(&space.widths);
        vec![width; layers]
    }

    fn ffnn(&mut self, base: &FfnnConfig) -> FfnnConfig {
        let space = self.space;
        FfnnConfig {
            hidden: self.hidden(),
            learning_rate: self.log_uniform(space.learning_rate),
            beta: self.log_uniform(space.beta),
            batch_size: self.choice(&space.batch_sizes),
            ..base.clone()
        }
    }
}

/// Draws one configuration from `space`, keeping the untuned fields
/// (epochs, seeds, realization counts, ...) of `base`. SMF samples every
/// network of the chain independently.
pub fn sample_config(base: &ModelConfig, space: &SearchSpace, n_sources: usize, rng: RngStream) -> ModelConfig {
    let mut s = Sampler { rng, space };
    match base {
        ModelConfig::ProNdf(c) => {
            let mut c = c.clone();
            c.hidden = s.hidden();
            c.train.learning_rate = s.log_uniform(space.learning_rate);
            c.weights.alpha1 = s.log_uniform(space.alpha_kl);
            c.weights.alpha2 = s.log_uniform(space.alpha_is);
            c.weights.alpha3 = s.log_uniform(space.alpha_l2);
            c.prior_sigma = s.log_uniform(space.prior_sigma);
            c.train.batch_size = s.choice(&space.batch_sizes);
            ModelConfig::ProNdf(c)
        }
        ModelConfig::Lmgp(c) => {
            let mut c = *c;
            c.learning_rate = s.log_uniform(space.lmgp_learning_rate);
            ModelConfig::Lmgp(c)
        }
        ModelConfig::Ffnn(c) => ModelConfig::Ffnn(s.ffnn(c)),
        ModelConfig::Smf(c) => {
            let template = c.stages.first().cloned().unwrap_or_default();
            let mut c = c.clone();
            c.stages = (0..n_sources.max(1)).map(|_| s.ffnn(&template)).collect();
            c.use_raw_inputs_in_final = s.rng.index(2) == 1;
            ModelConfig::Smf(c)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: ModelConfig,
    /// Mean HF validation MSE over the folds; absent if training failed.
    pub cv_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

/// Mean k-fold CV MSE on held-out HF rows. Predictions use the
/// ensemble mean only.
pub fn cv_score<T: Real>(config: &ModelConfig, data: &MixedDataset<T>, folds: usize, seed: u64) -> Result<f64> {
    let mut total = 0.0;
    let splits = kfold(data, folds, seed)?;
    for fold in &splits {
        let (model, _) = fit_model(config, &fold.train)?;
        let preds = model.predict_many(&fold.validation.inputs())?;
        let means: Vec<T> = preds.iter().map(|p| p.mean).collect();
        total += mse(&means, &fold.validation.targets())?.as_f64();
    }
    Ok(total / splits.len() as f64)
}

/// Index of the smallest score; ties go to the lowest index.
pub fn argmin_trial(trials: &[Trial]) -> Option<usize> {
    trials
        .iter()
        .filter_map(|t| t.cv_mse.filter(|v| v.is_finite()).map(|v| (t.index, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

/// Seeded random search. Trial `i` samples from its own child stream, so
/// trials are independent of evaluation order. Numerical failures mark
/// the trial as failed; other errors abort the search.
pub fn random_search<T: Real>(
    base: &ModelConfig,
    space: &SearchSpace,
    budget: usize,
    data: &MixedDataset<T>,
    seed: u64,
) -> Result<SearchResult> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::InvalidArgument("search budget must be ≥ 1".into()));
    }
    let mut trials = Vec::with_capacity(budget);
    for index in 0..budget {
        let params = sample_config(
            base,
            space,
            data.n_sources(),
            RngStream::child(seed, streams::TUNER, index as u64),
        );
        let (cv_mse, error) = match cv_score(&params, data, space.folds, seed) {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("non-finite CV score {v}"))),
            Err(e) if e.is_numerical() => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        trials.push(Trial {
            index,
            params,
            cv_mse,
            error,
        });
    }
    let best = argmin_trial(&trials).ok_or_else(|| {
        let log: Vec<String> = trials
            .iter()
            .map(|t| format!("trial {}: {}", t.index, t.error.as_deref().unwrap_or("?")))
            .collect();
        Error::Diverged {
            epoch: 0,
            detail: format!("every trial failed; {}", log.join("; ")),
        }
    })?;
    Ok(SearchResult {
        best: trials[best].clone(),
        trials,
    })
}
