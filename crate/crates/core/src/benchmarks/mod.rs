//! Analytic multi-fidelity benchmark families: Rational, Wing-weight and
//! Borehole. Source 0 is the high-fidelity function; sources 1.. are the
//! low-fidelity variants.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{MixedDataset, MixedInput, Sample, Schema};
use crate::error::{Error, Result};
use crate::numerics::{streams, Real, RngStream, Sobol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Rational,
    #[serde(rename = "wingweight")]
    WingWeight,
    Borehole,
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rational" => Ok(Self::Rational),
            "wingweight" => Ok(Self::WingWeight),
            "borehole" => Ok(Self::Borehole),
            _ => Err(Error::InvalidArgument(format!(
                "unknown problem `{s}` (expected rational, wingweight or borehole)"
            ))),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rational => "rational",
            Self::WingWeight => "wingweight",
            Self::Borehole => "borehole",
        })
    }
}

fn check_source(function: &'static str, id: usize, n: usize) -> Result<()> {
    if id >= n {
        return Err(Error::InvalidArgument(format!("{function} has no source {id} (sources 0..{n})")));
    }
    Ok(())
}

fn check_domain<T: Real>(names: &[&'static str], bounds: &[(f64, f64)], x: &[T]) -> Result<()> {
    if x.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            context: "benchmark input",
            expected: bounds.len(),
            actual: x.len(),
        });
    }
    for ((&name, &(lo, hi)), v) in names.iter().zip(bounds).zip(x) {
        let v = v.as_f64();
        let slack = 1e-9 * (hi - lo);
        if !(v >= lo - slack && v <= hi + slack) {
            return Err(Error::Domain {
                name,
                value: v,
                lower: lo,
                upper: hi,
            });
        }
    }
    Ok(())
}

/// HF `1/(0.1x³+x²+x+1)`; LF1 `1/(0.2x³+x²+x+1)`; LF2 `1/(x²+x+1)`;
/// LF3 `1/(x²+1)`.
pub fn rational<T: Real>(id: usize, x: T) -> Result<T> {
    check_source("rational", id, 4)?;
    let (c3, c1) = match id {
        0 => (0.1, 1.0),
        1 => (0.2, 1.0),
        2 => (0.0, 1.0),
        _ => (0.0, 0.0),
    };
    let den = T::lit(c3) * x * x * x + x * x + T::lit(c1) * x + T::one();
    if den.abs() < T::lit(1e-12) {
        return Err(Error::Pole {
            function: "rational",
            x: x.as_f64(),
        });
    }
    Ok(T::one() / den)
}

pub const WING_WEIGHT_NAMES: [&str; 10] = ["Sw", "Wfw", "A", "Lambda", "q", "lambda", "tc", "Nz", "Wdg", "Wp"];

/// Input box; the sweep angle Λ is in degrees.
pub const WING_WEIGHT_DOMAIN: [(f64, f64); 10] = [
    (150.0, 200.0),
    (220.0, 300.0),
    (6.0, 10.0),
    (-10.0, 10.0),
    (16.0, 45.0),
    (0.5, 1.0),
    (0.08, 0.18),
    (2.5, 6.0),
    (1700.0, 2500.0),
    (0.025, 0.08),
];

/// Wing weight `0.036 Sw^a Wfw^0.0035 (A/cos²Λ)^0.6 q^0.006 λ^0.04
/// (100 tc/cosΛ)^−0.3 (Nz Wdg)^0.49 + tail`. HF uses `a = 0.758` and tail
/// `Sw Wp`; LF1 tail `Wp`; LF2 `a = 0.8`, tail `Wp`; LF3 `a = 0.9`, no tail.
pub fn wing_weight<T: Real>(id: usize, x: &[T]) -> Result<T> {
    check_source("wing_weight", id, 4)?;
    check_domain(&WING_WEIGHT_NAMES, &WING_WEIGHT_DOMAIN, x)?;
    let [sw, wfw, a, sweep, q, lambda, tc, nz, wdg, wp] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9].map(|i| x[i]);
    let cos = (sweep * T::lit(PI / 180.0)).cos();
    let exponent = match id {
        0 | 1 => 0.758,
        2 => 0.8,
        _ => 0.9,
    };
    let core = T::lit(0.036)
        * sw.powf(T::lit(exponent))
        * wfw.powf(T::lit(0.0035))
        * (a / (cos * cos)).powf(T::lit(0.6))
        * q.powf(T::lit(0.006))
        * lambda.powf(T::lit(0.04))
        * (T::lit(100.0) * tc / cos).powf(T::lit(-0.3))
        * (nz * wdg).powf(T::lit(0.49));
    let tail = match id {
        0 => sw * wp,
        1 | 2 => wp,
        _ => T::zero(),
    };
    Ok(core + tail)
}

pub const BOREHOLE_NAMES: [&str; 8] = ["rw", "r", "Tu", "Hu", "Tl", "Hl", "L", "Kw"];

pub const BOREHOLE_DOMAIN: [(f64, f64); 8] = [
    (0.05, 0.15),
    (100.0, 50000.0),
    (63070.0, 115600.0),
    (990.0, 1110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1120.0, 1680.0),
    (9855.0, 12045.0),
];

/// Coefficients of the generalized borehole form
/// `2π Tu (a·Hu − b·Hl) / (ln(c·r/rw) (1 + d·L Tu/(ln(r/rw) rw² Kw) + e·Tu/Tl))`.
struct BoreholeVariant {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
}

const BOREHOLE_VARIANTS: [BoreholeVariant; 5] = [
    BoreholeVariant { a: 1.0, b: 1.0, c: 1.0, d: 2.0, e: 1.0 },
    BoreholeVariant { a: 1.0, b: 0.8, c: 1.0, d: 1.0, e: 1.0 },
    BoreholeVariant { a: 1.0, b: 3.0, c: 1.0, d: 8.0, e: 0.75 },
    BoreholeVariant { a: 1.1, b: 1.0, c: 4.0, d: 3.0, e: 1.0 },
    BoreholeVariant { a: 1.05, b: 1.0, c: 2.0, d: 2.0, e: 1.0 },
];

/// Borehole water flow. HF is the standard function; LF1–LF4 perturb the
/// head coefficients (`0.8 Hl`, `3 Hl`, `1.1 Hu`, `1.05 Hu`) together with
/// the geometric terms of the usual low-fidelity variants.
pub fn borehole<T: Real>(id: usize, x: &[T]) -> Result<T> {
    check_source("borehole", id, BOREHOLE_VARIANTS.len())?;
    check_domain(&BOREHOLE_NAMES, &BOREHOLE_DOMAIN, x)?;
    Ok(borehole_formula(&BOREHOLE_VARIANTS[id], x))
}

fn borehole_formula<T: Real>(v: &BoreholeVariant, x: &[T]) -> T {
    let [rw, r, tu, hu, tl, hl, l, kw] = [0, 1, 2, 3, 4, 5, 6, 7].map(|i| x[i]);
    let log_ratio = (r / rw).ln();
    let outer = (T::lit(v.c) * r / rw).ln();
    let num = T::lit(2.0 * PI) * tu * (T::lit(v.a) * hu - T::lit(v.b) * hl);
    let den = outer * (T::one() + T::lit(v.d) * l * tu / (log_ratio * rw * rw * kw) + T::lit(v.e) * tu / tl);
    num / den
}

/// One benchmark configuration: sources, domain box, per-source sample
/// sizes and noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticProblem {
    pub kind: ProblemKind,
    pub domain: Vec<(f64, f64)>,
    pub sizes: Vec<usize>,
    pub noise_var: f64,
    pub test_size: usize,
}

pub const DEFAULT_TEST_SIZE: usize = 10_000;

impl AnalyticProblem {
    /// `x ∈ [−2, 3]`, sizes `[5, 30, 30, 30]`, `σ² = 0.001`.
    pub fn rational() -> Self {
        Self {
            kind: ProblemKind::Rational,
            domain: vec![(-2.0, 3.0)],
            sizes: vec![5, 30, 30, 30],
            noise_var: 0.001,
            test_size: DEFAULT_TEST_SIZE,
        }
    }

    /// Sizes `[15, 50, 50, 50]`, `σ² = 25`.
    pub fn wing_weight() -> Self {
        Self {
            kind: ProblemKind::WingWeight,
            domain: WING_WEIGHT_DOMAIN.to_vec(),
            sizes: vec![15, 50, 50, 50],
            noise_var: 25.0,
            test_size: DEFAULT_TEST_SIZE,
        }
    }

    /// Sizes `[15, 50, 50, 50, 50]`, `σ² = 6.25`.
    pub fn borehole() -> Self {
        Self {
            kind: ProblemKind::Borehole,
            domain: BOREHOLE_DOMAIN.to_vec(),
            sizes: vec![15, 50, 50, 50, 50],
            noise_var: 6.25,
            test_size: DEFAULT_TEST_SIZE,
        }
    }

    pub fn from_kind(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Rational => Self::rational(),
            ProblemKind::WingWeight => Self::wing_weight(),
            ProblemKind::Borehole => Self::borehole(),
        }
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    pub fn dx(&self) -> usize {
        self.domain.len()
    }

    pub fn n_sources(&self) -> usize {
        self.sizes.len()
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        self.domain = domain;
        self
    }

    pub fn evaluate<T: Real>(&self, source: usize, x: &[T]) -> Result<T> {
        match self.kind {
            ProblemKind::Rational => {
                if x.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "rational input",
                        expected: 1,
                        actual: x.len(),
                    });
                }
                rational(source, x[0])
            }
            ProblemKind::WingWeight => wing_weight(source, x),
            ProblemKind::Borehole => borehole(source, x),
        }
    }

    fn validate(&self) -> Result<()> {
        let expected = match self.kind {
            ProblemKind::Rational => 1,
            ProblemKind::WingWeight => 10,
            ProblemKind::Borehole => 8,
        };
        let max_sources = match self.kind {
            ProblemKind::Borehole => 5,
            _ => 4,
        };
        if self.dx() != expected {
            return Err(Error::DimensionMismatch {
                context: "problem domain",
                expected,
                actual: self.dx(),
            });
        }
        if self.sizes.is_empty() || self.sizes.len() > max_sources || self.sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "{} needs 1..={max_sources} sources with positive sizes",
                self.kind
            )));
        }
        if !(self.noise_var >= 0.0) || self.domain.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument("noise variance must be ≥ 0 and domain bounds ordered".into()));
        }
        Ok(())
    }

    fn scale<T: Real>(&self, unit: &[f64]) -> Vec<T> {
        unit.iter()
            .zip(&self.domain)
            .map(|(&u, &(lo, hi))| T::lit(lo + u * (hi - lo)))
            .collect()
    }

    /// The first `count` unshifted Sobol points mapped to the domain.
    pub fn sobol_points<T: Real>(&self, count: usize) -> Result<Vec<Vec<T>>> {
        let mut seq = Sobol::new(self.dx())?;
        Ok((0..count).map(|_| self.scale(&seq.next_point::<f64>())).collect())
    }
}

/// Training data per source plus the noiseless HF test set.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkData<T> {
    pub sources: Vec<MixedDataset<T>>,
    pub test: MixedDataset<T>,
}

impl<T: Real> BenchmarkData<T> {
    /// All sources stacked into one dataset, HF rows first.
    pub fn train(&self) -> MixedDataset<T> {
        let schema = self.test.schema().clone();
        let rows = self.sources.iter().flat_map(|d| d.rows().iter().cloned()).collect();
        MixedDataset::new(schema, rows).expect("sources share the schema")
    }
}

/// Training inputs for source `s` are the first `n_s` Sobol points under a
/// Cranley–Patterson shift drawn from the source's own stream; outputs get
/// `N(0, σ²)` noise. The test set is the first `test_size` unshifted Sobol
/// points with noiseless HF outputs.
pub fn generate<T: Real>(problem: &AnalyticProblem, seed: u64) -> Result<BenchmarkData<T>> {
    problem.validate()?;
    let dx = problem.dx();
    let schema = Schema::numeric_only(dx, problem.n_sources());
    let noise_sd = problem.noise_var.sqrt();
    let mut sources = Vec::with_capacity(problem.n_sources());
    for (s, &n) in problem.sizes.iter().enumerate() {
        let mut shift_rng = RngStream::child(seed, streams::DATA_INPUTS, s as u64);
        let mut noise_rng = RngStream::child(seed, streams::DATA_NOISE, s as u64);
        let shift: Vec<f64> = (0..dx).map(|_| shift_rng.uniform()).collect();
        let mut seq = Sobol::new(dx)?;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let unit: Vec<f64> = seq
                .next_point::<f64>()
                .iter()
                .zip(&shift)
                .map(|(u, d)| (u + d).fract())
                .collect();
            let x: Vec<T> = problem.scale(&unit);
            let clean = problem.evaluate(s, &x)?;
            let y = if noise_sd > 0.0 {
                clean + T::lit(noise_sd * noise_rng.normal::<f64>())
            } else {
                clean
            };
            rows.push(Sample {
                input: MixedInput::numeric(x, s),
                y,
            });
        }
        sources.push(MixedDataset::new(schema.clone(), rows)?);
    }
    let test_rows = problem
        .sobol_points::<T>(problem.test_size)?
        .into_iter()
        .map(|x| {
            let y = problem.evaluate(0, &x)?;
            Ok(Sample {
                input: MixedInput::numeric(x, 0),
                y,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkData {
        sources,
        test: MixedDataset::new(schema, test_rows)?,
    })
}

/// `sqrt(Σ(y_l − y_h)² / (n·var(y_h)))` with the population variance.
pub fn rrmse_values(low: &[f64], high: &[f64]) -> Result<f64> {
    if low.len() != high.len() {
        return Err(Error::DimensionMismatch {
            context: "rrmse",
            expected: high.len(),
            actual: low.len(),
        });
    }
    if high.len() < 2 {
        return Err(Error::InvalidArgument("rrmse needs at least two points".into()));
    }
    let n = high.len() as f64;
    let mean = high.iter().sum::<f64>() / n;
    let var = high.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::InvalidArgument("rrmse undefined for a constant reference".into()));
    }
    let sse: f64 = low.iter().zip(high).map(|(l, h)| (l - h).powi(2)).sum();
    Ok((sse / (n * var)).sqrt())
}

/// RRMSE of source `source` against HF over `count` unshifted Sobol points.
pub fn rrmse(problem: &AnalyticProblem, source: usize, count: usize) -> Result<f64> {
    let points = problem.sobol_points::<f64>(count)?;
    let low = points.iter().map(|x| problem.evaluate(source, x)).collect::<Result<Vec<_>>>()?;
    let high = points.iter().map(|x| problem.evaluate(0, x)).collect::<Result<Vec<_>>>()?;
    rrmse_values(&low, &high)
}
