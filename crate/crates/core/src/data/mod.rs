//! Mixed-variable, multi-source data: schemas, one-hot encoding, source
//! augmentation, splitting, standardization and CSV I/O.

mod csv_io;
mod dataset;
mod encode;
mod schema;
mod standardize;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use dataset::{augment_with_source, split, validate_input, MixedDataset, MixedInput, Sample};
pub use encode::{one_hot_encode, one_hot_source};
pub use schema::{CategoricalVariable, Schema};
pub use standardize::Standardizer;
