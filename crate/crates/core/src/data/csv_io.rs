//! CSV ingestion and export.
//!
//! Columns: numeric inputs `x1..`, categorical inputs `t1..` (arbitrary
//! string labels), `source` (integer, 1 = high fidelity) and `y`. Reals are
//! written in shortest round-trip form, so save-then-load is lossless.

use std::io::{Read, Write};
use std::path::Path;

use super::dataset::{MixedDataset, MixedInput, Sample};
use super::schema::{CategoricalVariable, Schema};
use crate::error::{Error, Result};
use crate::numerics::Real;

enum Column {
    Numeric(usize),
    Categorical(usize),
    Source,
    Output,
}

fn classify(name: &str) -> Option<char> {
    let mut chars = name.chars();
    let head = chars.next()?;
    let rest = chars.as_str();
    if (head == 'x' || head == 't') && !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
        Some(head)
    } else {
        None
    }
}

pub fn read_csv<T: Real, R: Read>(reader: R) -> Result<MixedDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    let mut columns = Vec::with_capacity(headers.len());
    let (mut has_source, mut has_y) = (false, false);
    for name in headers.iter() {
        let col = match (name, classify(name)) {
            ("source", _) => {
                has_source = true;
                Column::Source
            }
            ("y", _) => {
                has_y = true;
                Column::Output
            }
            (_, Some('x')) => {
                numeric.push(name.to_owned());
                Column::Numeric(numeric.len() - 1)
            }
            (_, Some('t')) => {
                categorical.push(CategoricalVariable::new(name, Vec::new()));
                Column::Categorical(categorical.len() - 1)
            }
            _ => return Err(Error::Schema(format!("unrecognized column `{name}`"))),
        };
        columns.push(col);
    }
    if !has_source {
        return Err(Error::Schema("missing `source` column".into()));
    }
    if !has_y {
        return Err(Error::Schema("missing `y` column".into()));
    }

    let mut rows = Vec::new();
    let mut n_sources = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let line = line + 2;
        let mut x = vec![T::zero(); numeric.len()];
        let mut tc = vec![0; categorical.len()];
        let (mut source, mut y) = (0, T::zero());
        for (field, col) in record.iter().zip(&columns) {
            let parse_real = |what: &str| {
                field.parse::<T>().map_err(|_| {
                    Error::Schema(format!("line {line}: non-numeric value `{field}` in `{what}`"))
                })
            };
            match *col {
                Column::Numeric(j) => x[j] = parse_real(&numeric[j])?,
                Column::Categorical(j) => tc[j] = categorical[j].intern(field),
                Column::Source => {
                    source = field
                        .parse::<usize>()
                        .ok()
                        .filter(|&s| s >= 1)
                        .ok_or_else(|| {
                            Error::Schema(format!("line {line}: invalid source `{field}` (integer ≥ 1)"))
                        })?;
                }
                Column::Output => y = parse_real("y")?,
            }
        }
        n_sources = n_sources.max(source);
        rows.push(Sample {
            input: MixedInput::new(x, tc, source - 1),
            y,
        });
    }
    MixedDataset::new(Schema::new(numeric, categorical, n_sources), rows)
}

pub fn load_csv<T: Real>(path: impl AsRef<Path>) -> Result<MixedDataset<T>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(std::io::BufReader::new(file))
}

pub fn write_csv<T: Real, W: Write>(dataset: &MixedDataset<T>, writer: W) -> Result<()> {
    let schema = dataset.schema();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = schema.numeric.iter().map(String::as_str).collect();
    header.extend(schema.categorical.iter().map(|c| c.name.as_str()));
    header.extend(["source", "y"]);
    wtr.write_record(&header)?;
    for row in dataset.rows() {
        let mut record: Vec<String> = row.input.x.iter().map(|v| format!("{:?}", v.as_f64())).collect();
        record.extend(
            row.input
                .tc
                .iter()
                .zip(&schema.categorical)
                .map(|(&l, var)| var.levels[l].clone()),
        );
        record.push((row.input.source + 1).to_string());
        record.push(format!("{:?}", row.y.as_f64()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv<T: Real>(dataset: &MixedDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(dataset, std::io::BufWriter::new(file))
}
