//! Test metrics, k-fold cross-validation on HF rows, a common interface to
//! every model kind and the seeded random hyperparameter search.

mod ablation;
mod cv;
mod metrics;
mod models;
mod search;

pub use ablation::{compare, farthest_source, run_ablation, AblationRow, AblationVersion, ComparisonRow};
pub use cv::{kfold, Fold};
pub use metrics::{coverage95, mean_interval_score, mse, MetricsReport, Prediction};
pub use models::{fit_model, FittedModel, History, ModelConfig, ModelKind};
pub use search::{argmin_trial, cv_score, random_search, sample_config, SearchResult, SearchSpace, Trial};
