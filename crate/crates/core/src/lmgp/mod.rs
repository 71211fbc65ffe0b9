//! Latent-map Gaussian process: a Gaussian kernel over numeric inputs whose
//! categorical variables (including the data source) are embedded as
//! learned points in two-dimensional latent spaces.

mod likelihood;

use serde::{Deserialize, Serialize};

use crate::data::{validate_input, MixedDataset, MixedInput, Schema, Standardizer};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, streams, AdamConfig, AdamState, Cholesky, Matrix, Real, RngStream};
use likelihood::{
    correlation_matrix, factor_with_nugget, logit_from_nugget, nugget_from_logit, profile, profiled_nll, unpack,
    Prepared,
};

/// Smallest admissible nugget.
pub const NUGGET_MIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub dx: usize,
    pub ds: usize,
    pub n_levels: usize,
}

impl Layout {
    fn of(schema: &Schema) -> Self {
        Self {
            dx: schema.dx(),
            ds: schema.n_sources,
            n_levels: schema.one_hot_len(),
        }
    }

    fn n_params(&self) -> usize {
        self.dx + 2 * self.ds + 2 * self.n_levels + 1
    }
}

fn category_rows(schema: &Schema, tc: &[usize]) -> Vec<usize> {
    let mut offset = 0;
    tc.iter()
        .zip(&schema.categorical)
        .map(|(&level, var)| {
            let row = offset + level;
            offset += var.levels.len();
            row
        })
        .collect()
}

/// `z = ζ A` for a one-hot (or multi-hot) row vector `ζ`.
pub fn latent_map<T: Real>(zeta: &[T], a: &Matrix<T>) -> Result<[T; 2]> {
    if a.cols() != 2 {
        return Err(Error::DimensionMismatch {
            context: "latent_map columns",
            expected: 2,
            actual: a.cols(),
        });
    }
    let z = a.vecmat(zeta)?;
    Ok([z[0], z[1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmgpConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LmgpConfig {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iters: 400,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Serialized form: every parameter in original units, the training data
/// and the standardizer used while fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LmgpParams<T> {
    pub m: T,
    pub s2: T,
    pub omega: Vec<T>,
    pub a_s: Matrix<T>,
    pub a_c: Option<Matrix<T>>,
    pub nugget: T,
    pub schema: Schema,
    pub standardizer: Standardizer<T>,
    pub train_inputs: Vec<MixedInput<T>>,
    pub train_y: Vec<T>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    chol: Cholesky<T>,
    /// `(R+δI)⁻¹(y − 1m)`.
    alpha: Vec<T>,
    kinv_one: Vec<T>,
    one_kinv_one: T,
}

/// A fitted latent-map GP. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "LmgpParams<T>", into = "LmgpParams<T>")]
pub struct LmgpModel<T: Real> {
    params: LmgpParams<T>,
    cache: Cache<T>,
}

/// Models compare by parameters; the cache is derived from them.
impl<T: Real> PartialEq for LmgpModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl<T: Real> From<LmgpModel<T>> for LmgpParams<T> {
    fn from(m: LmgpModel<T>) -> Self {
        m.params
    }
}

impl<T: Real> TryFrom<LmgpParams<T>> for LmgpModel<T> {
    type Error = Error;

    fn try_from(params: LmgpParams<T>) -> Result<Self> {
        LmgpModel::from_params(params)
    }
}

fn theta_of<T: Real>(p: &LmgpParams<T>) -> Vec<T> {
    let mut theta = p.omega.clone();
    theta.extend_from_slice(p.a_s.as_slice());
    if let Some(a_c) = &p.a_c {
        theta.extend_from_slice(a_c.as_slice());
    }
    theta.push(logit_from_nugget(p.nugget));
    theta
}

impl<T: Real> LmgpModel<T> {
    /// Builds a model from explicit parameters, factorizing `R + δI`.
    pub fn from_params(params: LmgpParams<T>) -> Result<Self> {
        let layout = Layout::of(&params.schema);
        let n = params.train_inputs.len();
        if n == 0 || params.train_y.len() != n {
            return Err(Error::DimensionMismatch {
                context: "LMGP training data",
                expected: n,
                actual: params.train_y.len(),
            });
        }
        if params.omega.len() != layout.dx
            || params.a_s.rows() != layout.ds
            || params.a_s.cols() != 2
            || params.a_c.as_ref().map_or(0, |a| a.rows()) != layout.n_levels
        {
            return Err(Error::Schema("LMGP parameter shapes do not match the schema".into()));
        }
        if !(params.nugget >= T::lit(NUGGET_MIN) * T::lit(1.0 - 1e-9)) || params.s2 < T::zero() {
            return Err(Error::InvalidArgument("LMGP requires nugget ≥ 1e-8 and s2 ≥ 0".into()));
        }
        for input in &params.train_inputs {
            validate_input(&params.schema, input)?;
        }
        let prepared = prepare(&params.schema, &params.train_inputs, &params.train_y);
        let theta = theta_of(&params);
        let un = unpack(&layout, &theta);
        let r = correlation_matrix(&prepared, &un);
        let chol = factor_with_nugget(&r, params.nugget)?;
        let resid: Vec<T> = params.train_y.iter().map(|&y| y - params.m).collect();
        let alpha = chol.solve(&resid)?;
        let kinv_one = chol.solve(&vec![T::one(); n])?;
        let one_kinv_one = kinv_one.iter().copied().sum();
        Ok(Self {
            params,
            cache: Cache {
                chol,
                alpha,
                kinv_one,
                one_kinv_one,
            },
        })
    }

    pub fn params(&self) -> &LmgpParams<T> {
        &self.params
    }

    pub fn schema(&self) -> &Schema {
        &self.params.schema
    }

    pub fn m(&self) -> T {
        self.params.m
    }

    pub fn s2(&self) -> T {
        self.params.s2
    }

    pub fn omega(&self) -> &[T] {
        &self.params.omega
    }

    pub fn nugget(&self) -> T {
        self.params.nugget
    }

    pub fn a_s(&self) -> &Matrix<T> {
        &self.params.a_s
    }

    pub fn a_c(&self) -> Option<&Matrix<T>> {
        self.params.a_c.as_ref()
    }

    /// Latent point of a source in the fidelity manifold.
    pub fn source_latent(&self, source: usize) -> Result<[T; 2]> {
        let zeta = crate::data::one_hot_source(source, self.params.schema.n_sources)?;
        latent_map(&zeta, &self.params.a_s)
    }

    pub fn source_distance(&self, a: usize, b: usize) -> Result<T> {
        let (za, zb) = (self.source_latent(a)?, self.source_latent(b)?);
        Ok(((za[0] - zb[0]).powi(2) + (za[1] - zb[1]).powi(2)).sqrt())
    }

    /// Latent point of a categorical combination (origin when `dt = 0`).
    pub fn categorical_latent(&self, tc: &[usize]) -> Result<[T; 2]> {
        match &self.params.a_c {
            Some(a_c) => latent_map(&crate::data::one_hot_encode(tc, &self.params.schema)?, a_c),
            None => Ok([T::zero(); 2]),
        }
    }

    fn latent_of(&self, p: &MixedInput<T>) -> ([T; 2], [T; 2]) {
        let s = &self.params.a_s;
        let zs = [s[(p.source, 0)], s[(p.source, 1)]];
        let mut zc = [T::zero(); 2];
        if let Some(a_c) = &self.params.a_c {
            for row in category_rows(&self.params.schema, &p.tc) {
                zc[0] = zc[0] + a_c[(row, 0)];
                zc[1] = zc[1] + a_c[(row, 1)];
            }
        }
        (zs, zc)
    }

    /// `r(p1, p2) = exp(−‖z(t1)−z(t2)‖² − Σ 10^ω_i (x1_i − x2_i)²)`.
    pub fn correlation(&self, p1: &MixedInput<T>, p2: &MixedInput<T>) -> Result<T> {
        validate_input(&self.params.schema, p1)?;
        validate_input(&self.params.schema, p2)?;
        Ok(self.correlation_unchecked(p1, p2))
    }

    fn correlation_unchecked(&self, p1: &MixedInput<T>, p2: &MixedInput<T>) -> T {
        let (s1, c1) = self.latent_of(p1);
        let (s2, c2) = self.latent_of(p2);
        let sq = |a: [T; 2], b: [T; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        let mut d = sq(s1, s2) + sq(c1, c2);
        for ((a, b), o) in p1.x.iter().zip(&p2.x).zip(&self.params.omega) {
            d = d + T::lit(10.0).powf(*o) * (*a - *b).powi(2);
        }
        (-d).exp()
    }

    /// Predictive mean and variance at `p`.
    pub fn predict(&self, p: &MixedInput<T>) -> Result<(T, T)> {
        validate_input(&self.params.schema, p)?;
        let r: Vec<T> = self
            .params
            .train_inputs
            .iter()
            .map(|q| self.correlation_unchecked(p, q))
            .collect();
        let mean = self.params.m + crate::numerics::dot(&r, &self.cache.alpha);
        let v = self.cache.chol.solve_lower(&r)?;
        let rkr: T = v.iter().map(|&t| t * t).sum();
        let g = T::one() - crate::numerics::dot(&self.cache.kinv_one, &r);
        let var = self.params.s2 * (T::one() - rkr + g * g / self.cache.one_kinv_one);
        Ok((mean, var.max(T::zero())))
    }

    pub fn predict_many(&self, inputs: &[MixedInput<T>]) -> Result<Vec<(T, T)>> {
        inputs.iter().map(|p| self.predict(p)).collect()
    }

    /// Negative log-likelihood of `dataset` under the model's own `m`, `s²`,
    /// kernel and nugget (no profiling).
    pub fn neg_log_likelihood(&self, dataset: &MixedDataset<T>) -> Result<T> {
        neg_log_likelihood(self, dataset)
    }
}

/// `−ln N(y | 1m, s²(R+δI))` evaluated through a Cholesky factorization.
pub fn neg_log_likelihood<T: Real>(model: &LmgpModel<T>, dataset: &MixedDataset<T>) -> Result<T> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InvalidArgument("likelihood needs at least two rows".into()));
    }
    let p = &model.params;
    let schema = &p.schema;
    schema.check_compatible(dataset.schema())?;
    let prepared = prepare(schema, &dataset.inputs(), &dataset.targets());
    let theta = theta_of(p);
    let layout = Layout::of(schema);
    let r = correlation_matrix(&prepared, &unpack(&layout, &theta));
    let chol = factor_with_nugget(&r, p.nugget)?;
    let resid: Vec<T> = prepared.y.iter().map(|&y| y - p.m).collect();
    let v = chol.solve_lower(&resid)?;
    let quad: T = v.iter().map(|&t| t * t).sum();
    let nf = T::from_count(n);
    Ok(nf / T::lit(2.0) * (T::lit(std::f64::consts::TAU) * p.s2).ln()
        + chol.logdet() / T::lit(2.0)
        + quad / (T::lit(2.0) * p.s2))
}

fn prepare<T: Real>(schema: &Schema, inputs: &[MixedInput<T>], y: &[T]) -> Prepared<T> {
    Prepared {
        x: inputs.iter().map(|p| p.x.clone()).collect(),
        source: inputs.iter().map(|p| p.source).collect(),
        cat_rows: inputs.iter().map(|p| category_rows(schema, &p.tc)).collect(),
        y: y.to_vec(),
    }
}

/// Maximum-likelihood fit. Inputs and outputs are standardized internally;
/// `m` and `s²` are profiled out and the remaining parameters
/// `(ω, A_s, A_c, δ)` are optimized with Adam from `n_starts` random starts.
pub fn fit<T: Real>(dataset: &MixedDataset<T>, config: &LmgpConfig) -> Result<LmgpModel<T>> {
    if dataset.len() < 2 {
        return Err(Error::InvalidArgument("LMGP needs at least two training rows".into()));
    }
    if config.n_starts == 0 {
        return Err(Error::InvalidArgument("n_starts must be positive".into()));
    }
    let schema = dataset.schema().clone();
    let layout = Layout::of(&schema);
    let standardizer = Standardizer::fit(dataset);
    let std_data = standardizer.apply(dataset)?;
    let prepared = prepare(&schema, &std_data.inputs(), &std_data.targets());
    let adam = AdamConfig::with_learning_rate(config.learning_rate);

    let mut best: Option<(T, Vec<T>)> = None;
    let mut last_err = None;
    for start in 0..config.n_starts {
        let mut rng = RngStream::child(config.seed, streams::INIT, start as u64);
        let mut theta = Vec::with_capacity(layout.n_params());
        for _ in 0..layout.dx {
            theta.push(rng.uniform_in(T::lit(-2.0), T::lit(1.0)));
        }
        for _ in 0..2 * (layout.ds + layout.n_levels) {
            theta.push(rng.normal());
        }
        theta.push(T::zero());
        match run_start(&layout, &prepared, theta, &adam, config.max_iters) {
            Ok((nll, th)) => {
                if best.as_ref().is_none_or(|(b, _)| nll < *b) {
                    best = Some((nll, th));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (_, theta) = best.ok_or_else(|| last_err.unwrap_or(Error::IncreaseNugget))?;

    let un = unpack(&layout, &theta);
    let delta = nugget_from_logit(un.u);
    let r = correlation_matrix(&prepared, &un);
    let pr = profile(&factor_with_nugget(&r, delta)?, &prepared.y)?;

    // Back to original units: 10^ω scales with 1/scale², m and s² with y.
    let omega = un
        .omega
        .iter()
        .zip(&standardizer.x_scale)
        .map(|(&o, &s)| o - T::lit(2.0) * s.log10())
        .collect();
    let a_s = Matrix::from_vec(layout.ds, 2, un.a_s.to_vec())?;
    let a_c = (layout.n_levels > 0)
        .then(|| Matrix::from_vec(layout.n_levels, 2, un.a_c.to_vec()))
        .transpose()?;
    let params = LmgpParams {
        m: standardizer.invert_y(pr.m),
        s2: pr.s2 * standardizer.y_scale * standardizer.y_scale,
        omega,
        a_s,
        a_c,
        nugget: delta,
        schema,
        standardizer,
        train_inputs: dataset.inputs(),
        train_y: dataset.targets(),
    };
    LmgpModel::from_params(params)
}

fn run_start<T: Real>(
    layout: &Layout,
    prepared: &Prepared<T>,
    mut theta: Vec<T>,
    adam: &AdamConfig,
    max_iters: usize,
) -> Result<(T, Vec<T>)> {
    let mut state = AdamState::new(theta.len());
    let (mut best_nll, mut best_theta) = (T::infinity(), theta.clone());
    for _ in 0..max_iters.max(1) {
        let (nll, grad) = match profiled_nll(layout, prepared, &theta, true) {
            Ok((v, Some(g))) => (v, g),
            Ok((_, None)) => unreachable!(),
            Err(_) if best_nll.is_finite() => break,
            Err(e) => return Err(e),
        };
        if nll < best_nll {
            best_nll = nll;
            best_theta.copy_from_slice(&theta);
        }
        if grad.iter().all(|g| g.abs() < T::lit(1e-7)) || adam_step(&mut theta, &grad, &mut state, adam).is_err() {
            break;
        }
    }
    if let Ok((v, _)) = profiled_nll(layout, prepared, &theta, false) {
        if v < best_nll {
            best_nll = v;
            best_theta = theta;
        }
    }
    Ok((best_nll, best_theta))
}
