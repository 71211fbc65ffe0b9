use serde::{Deserialize, Serialize};

use super::{DenseLayer, LayerShape, Network, Workspace};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real, RngStream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Isotropic prior `N(0, σ_p² I)` over a layer's flattened parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub sigma: f64,
}

impl GaussianPrior {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn log_density<T: Real>(&self, theta: &[T]) -> T {
        let var = T::lit(self.sigma * self.sigma);
        let c = T::from_count(theta.len());
        let sq: T = theta.iter().map(|&t| t * t).sum();
        -(c / T::lit(2.0)) * (T::lit(LN_2PI) + var.ln()) - sq / (T::lit(2.0) * var)
    }
}

/// `q(θ) = N(μ, L Lᵀ)` over the `c_k` flattened weights and biases of one
/// layer. `L` is stored packed row-major (lower triangle) with its diagonal
/// kept as logarithms so it stays positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VariationalLayer<T> {
    pub shape: LayerShape,
    pub mean: Vec<T>,
    pub chol: Vec<T>,
}

#[inline]
fn tri(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl<T: Real> VariationalLayer<T> {
    /// `μ ~ N(0, 0.1²)`, `L = 0.05 I`.
    pub fn init(shape: LayerShape, rng: &mut RngStream) -> Self {
        let c = shape.n_params();
        let mean = (0..c).map(|_| T::lit(0.1 * rng.normal::<f64>())).collect();
        let mut chol = vec![T::zero(); c * (c + 1) / 2];
        for i in 0..c {
            chol[tri(i, i)] = T::lit(0.05f64.ln());
        }
        Self { shape, mean, chol }
    }

    /// Builds a layer from a mean and a full lower-triangular factor with
    /// positive diagonal.
    pub fn from_factor(shape: LayerShape, mean: Vec<T>, factor: &Matrix<T>) -> Result<Self> {
        let c = shape.n_params();
        if mean.len() != c || factor.rows() != c || factor.cols() != c {
            return Err(Error::DimensionMismatch {
                context: "VariationalLayer::from_factor",
                expected: c,
                actual: mean.len(),
            });
        }
        let mut chol = vec![T::zero(); c * (c + 1) / 2];
        for i in 0..c {
            for j in 0..i {
                chol[tri(i, j)] = factor[(i, j)];
            }
            let d = factor[(i, i)];
            if d <= T::zero() {
                return Err(Error::InvalidArgument("factor diagonal must be positive".into()));
            }
            chol[tri(i, i)] = d.ln();
        }
        Ok(Self { shape, mean, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_var_params(&self) -> usize {
        self.mean.len() + self.chol.len()
    }

    pub fn factor_entry(&self, i: usize, j: usize) -> T {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => T::zero(),
            std::cmp::Ordering::Equal => self.chol[tri(i, i)].exp(),
            std::cmp::Ordering::Greater => self.chol[tri(i, j)],
        }
    }

    pub fn factor(&self) -> Matrix<T> {
        Matrix::from_fn(self.dim(), self.dim(), |i, j| self.factor_entry(i, j))
    }

    pub fn covariance(&self) -> Matrix<T> {
        let l = self.factor();
        l.matmul(&l.transpose()).expect("square")
    }

    pub fn log_det_covariance(&self) -> T {
        let s: T = (0..self.dim()).map(|i| self.chol[tri(i, i)]).sum();
        T::lit(2.0) * s
    }

    /// `θ = μ + L ε`, written into `theta`.
    pub fn transform(&self, eps: &[T], theta: &mut [T]) {
        let c = self.dim();
        for i in 0..c {
            let mut acc = self.mean[i];
            let row = &self.chol[tri(i, 0)..tri(i, i)];
            for (l, e) in row.iter().zip(eps) {
                acc = acc + *l * *e;
            }
            theta[i] = acc + self.chol[tri(i, i)].exp() * eps[i];
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> (Vec<T>, Vec<T>) {
        let eps: Vec<T> = rng.normals(self.dim());
        let mut theta = vec![T::zero(); self.dim()];
        self.transform(&eps, &mut theta);
        (theta, eps)
    }

    /// Accumulates `∂L/∂(μ, L)` given `∂L/∂θ` for a draw with noise `eps`.
    /// Gradient layout matches `[mean, chol]`.
    pub fn backprop_sample(&self, eps: &[T], grad_theta: &[T], grad: &mut [T]) {
        let c = self.dim();
        let (gm, gl) = grad.split_at_mut(c);
        for i in 0..c {
            let g = grad_theta[i];
            gm[i] = gm[i] + g;
            for j in 0..i {
                gl[tri(i, j)] = gl[tri(i, j)] + g * eps[j];
            }
            let d = tri(i, i);
            gl[d] = gl[d] + g * eps[i] * self.chol[d].exp();
        }
    }

    /// `ln q(θ)` at `θ = μ + L ε`.
    pub fn log_q(&self, eps: &[T]) -> T {
        let c = T::from_count(self.dim());
        let sq: T = eps.iter().map(|&e| e * e).sum();
        -(c / T::lit(2.0)) * T::lit(LN_2PI) - self.log_det_covariance() / T::lit(2.0) - sq / T::lit(2.0)
    }

    /// One-draw estimate `ln q(θ) − ln P(θ)` with its gradient (times
    /// `scale`) accumulated into `grad`.
    pub fn kl_draw(&self, prior: &GaussianPrior, theta: &[T], eps: &[T], scale: T, grad: &mut [T]) -> T {
        let value = self.log_q(eps) - prior.log_density(theta);
        let var = T::lit(prior.sigma * prior.sigma);
        let g_theta: Vec<T> = theta.iter().map(|&t| scale * t / var).collect();
        self.backprop_sample(eps, &g_theta, grad);
        let c = self.dim();
        for i in 0..c {
            let d = c + tri(i, i);
            grad[d] = grad[d] - scale;
        }
        value
    }

    pub fn flatten_into(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.mean);
        out.extend_from_slice(&self.chol);
    }

    pub fn load_from(&mut self, flat: &[T]) {
        let c = self.dim();
        self.mean.copy_from_slice(&flat[..c]);
        let n = self.chol.len();
        self.chol.copy_from_slice(&flat[c..c + n]);
    }
}

/// Draws `θ = μ + L ε` and reshapes it into a concrete layer.
pub fn sample_variational<T: Real>(layer: &VariationalLayer<T>, rng: &mut RngStream) -> DenseLayer<T> {
    let (theta, _) = layer.sample(rng);
    DenseLayer::from_flat(layer.shape, &theta).expect("layout")
}

/// Closed-form `KL(q ‖ N(0, σ_p² I))`.
pub fn kl_closed_form<T: Real>(layer: &VariationalLayer<T>, prior: &GaussianPrior) -> T {
    let var = T::lit(prior.sigma * prior.sigma);
    let c = T::from_count(layer.dim());
    let mut trace = T::zero();
    for i in 0..layer.dim() {
        for j in 0..=i {
            let l = layer.factor_entry(i, j);
            trace = trace + l * l;
        }
    }
    let mm: T = layer.mean.iter().map(|&m| m * m).sum();
    T::lit(0.5) * (trace / var + mm / var - c + c * var.ln() - layer.log_det_covariance())
}

/// Monte-Carlo `KL(q ‖ P) ≈ (1/n) Σ_j [ln q(θ_j) − ln P(θ_j)]`, `θ_j ~ q`.
pub fn kl_to_prior<T: Real>(
    layer: &VariationalLayer<T>,
    prior: &GaussianPrior,
    n_mc: usize,
    rng: &mut RngStream,
) -> Result<T> {
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    let mut acc = T::zero();
    for _ in 0..n_mc {
        let (theta, eps) = layer.sample(rng);
        acc = acc + layer.log_q(&eps) - prior.log_density(&theta);
    }
    Ok(acc / T::from_count(n_mc))
}

/// One sampled set of network parameters and the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization<T> {
    pub theta: Vec<T>,
    pub eps: Vec<T>,
}

/// A network whose every layer is a `VariationalLayer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VariationalNetwork<T> {
    network: Network<T>,
    layers: Vec<VariationalLayer<T>>,
}

impl<T: Real> VariationalNetwork<T> {
    pub fn init(shapes: Vec<LayerShape>, rng: &mut RngStream) -> Result<Self> {
        let layers = shapes.iter().map(|&s| VariationalLayer::init(s, rng)).collect();
        Ok(Self {
            network: Network::zeros(shapes)?,
            layers,
        })
    }

    pub fn from_layers(layers: Vec<VariationalLayer<T>>) -> Result<Self> {
        let shapes = layers.iter().map(|l| l.shape).collect();
        Ok(Self {
            network: Network::zeros(shapes)?,
            layers,
        })
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    pub fn layers(&self) -> &[VariationalLayer<T>] {
        &self.layers
    }

    pub fn n_outputs(&self) -> usize {
        self.network.n_outputs()
    }

    /// Length of the flat `[μ_1, L_1, μ_2, L_2, …]` vector.
    pub fn n_var_params(&self) -> usize {
        self.layers.iter().map(|l| l.n_var_params()).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_var_params());
        for l in &self.layers {
            l.flatten_into(&mut out);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_var_params() {
            return Err(Error::DimensionMismatch {
                context: "VariationalNetwork::set_flat_params",
                expected: self.n_var_params(),
                actual: flat.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.n_var_params();
            l.load_from(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RngStream) -> Realization<T> {
        let eps: Vec<T> = rng.normals(self.network.n_params());
        self.realization_from_eps(eps).expect("noise length")
    }

    /// The realization produced by a given noise vector.
    pub fn realization_from_eps(&self, eps: Vec<T>) -> Result<Realization<T>> {
        let n = self.network.n_params();
        if eps.len() != n {
            return Err(Error::DimensionMismatch {
                context: "realization noise",
                expected: n,
                actual: eps.len(),
            });
        }
        let mut theta = vec![T::zero(); n];
        for (k, l) in self.layers.iter().enumerate() {
            let r = self.network.layer_range(k);
            l.transform(&eps[r.clone()], &mut theta[r]);
        }
        Ok(Realization { theta, eps })
    }

    /// The realization at the posterior mean (`ε = 0`).
    pub fn mean_realization(&self) -> Realization<T> {
        let mut theta = Vec::with_capacity(self.network.n_params());
        for l in &self.layers {
            theta.extend_from_slice(&l.mean);
        }
        let eps = vec![T::zero(); theta.len()];
        Realization { theta, eps }
    }

    pub fn forward<'w>(&self, r: &Realization<T>, input: &[T], ws: &'w mut Workspace<T>) -> Result<&'w [T]> {
        self.network.forward_with(&r.theta, input, ws)
    }

    /// Maps `∂L/∂θ` of a realization to the flat variational gradient.
    pub fn backprop_realization(&self, r: &Realization<T>, grad_theta: &[T], grad: &mut [T]) {
        let mut at = 0;
        for (k, l) in self.layers.iter().enumerate() {
            let range = self.network.layer_range(k);
            let n = l.n_var_params();
            l.backprop_sample(&r.eps[range.clone()], &grad_theta[range], &mut grad[at..at + n]);
            at += n;
        }
    }

    /// Sum over layers of the one-draw KL estimate, gradient accumulated.
    pub fn kl_draw(&self, prior: &GaussianPrior, r: &Realization<T>, scale: T, grad: &mut [T]) -> T {
        let mut at = 0;
        let mut total = T::zero();
        for (k, l) in self.layers.iter().enumerate() {
            let range = self.network.layer_range(k);
            let n = l.n_var_params();
            total = total + l.kl_draw(prior, &r.theta[range.clone()], &r.eps[range], scale, &mut grad[at..at + n]);
            at += n;
        }
        total
    }

    pub fn kl_closed_form(&self, prior: &GaussianPrior) -> T {
        self.layers.iter().map(|l| kl_closed_form(l, prior)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;
    use crate::numerics::finite_difference_grad;

    fn layer5(rng: &mut RngStream) -> VariationalLayer<f64> {
        let shape = LayerShape::new(4, 1, Activation::Identity);
        let mut l = VariationalLayer::init(shape, rng);
        for (i, c) in l.chol.iter_mut().enumerate() {
            *c += 0.1 * ((i as f64) * 0.7).sin();
        }
        l
    }

    #[test]
    fn kl_one_dimensional_unit_variance() {
        let shape = LayerShape::new(0, 1, Activation::Identity);
        let f = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let l = VariationalLayer::from_factor(shape, vec![1.7], &f).unwrap();
        let prior = GaussianPrior::new(1.0).unwrap();
        assert!((kl_closed_form(&l, &prior) - 1.7f64 * 1.7 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn kl_identical_is_zero() {
        let shape = LayerShape::new(1, 1, Activation::Identity);
        let f = Matrix::from_rows(&[vec![2.0f64, 0.0], vec![0.0, 2.0]]).unwrap();
        let l = VariationalLayer::from_factor(shape, vec![0.0, 0.0], &f).unwrap();
        let prior = GaussianPrior::new(2.0).unwrap();
        assert!(kl_closed_form(&l, &prior).abs() < 1e-12);
    }

    #[test]
    fn mc_kl_within_three_standard_errors() {
        let mut rng = RngStream::new(1, 0);
        let l = layer5(&mut rng);
        assert_eq!(l.dim(), 5);
        let prior = GaussianPrior::new(0.5).unwrap();
        let exact = kl_closed_form(&l, &prior);
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let (t, e) = l.sample(&mut rng);
                l.log_q(&e) - prior.log_density(&t)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn sample_mean_converges() {
        let mut rng = RngStream::new(2, 0);
        let shape = LayerShape::new(1, 1, Activation::Identity);
        let f = Matrix::from_rows(&[vec![0.3, 0.0], vec![0.2, 0.4]]).unwrap();
        let l = VariationalLayer::from_factor(shape, vec![1.0, -2.0], &f).unwrap();
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let (t, _) = l.sample(&mut rng);
            sum[0] += t[0];
            sum[1] += t[1];
        }
        let sd = [0.3, (0.2f64 * 0.2 + 0.4 * 0.4).sqrt()];
        for i in 0..2 {
            let m = sum[i] / n as f64;
            assert!((m - l.mean[i]).abs() < 4.0 * sd[i] / (n as f64).sqrt());
        }
    }

    #[test]
    fn covariance_is_factor_product() {
        let mut rng = RngStream::new(3, 0);
        let l = layer5(&mut rng);
        let cov = l.covariance();
        let cf = crate::numerics::cholesky(&cov).unwrap();
        assert!(cf.factor().sub(&l.factor()).unwrap().norm_inf() < 1e-12);
    }

    #[test]
    fn kl_draw_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(4, 0);
        let l = layer5(&mut rng);
        let prior = GaussianPrior::new(0.7).unwrap();
        let eps: Vec<f64> = rng.normals(5);
        let f = |flat: &[f64]| {
            let mut m = l.clone();
            m.load_from(flat);
            let mut t = vec![0.0; 5];
            m.transform(&eps, &mut t);
            m.log_q(&eps) - prior.log_density(&t)
        };
        let mut flat = Vec::new();
        l.flatten_into(&mut flat);
        let mut theta = vec![0.0; 5];
        l.transform(&eps, &mut theta);
        let mut g = vec![0.0; flat.len()];
        let v = l.kl_draw(&prior, &theta, &eps, 1.0, &mut g);
        assert!((v - f(&flat)).abs() < 1e-12);
        let fd = finite_difference_grad(f, &flat, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn degenerate_covariance_samples_mean() {
        let shape = LayerShape::new(1, 1, Activation::Tanh);
        let f = Matrix::from_rows(&[vec![1e-12, 0.0], vec![0.0, 1e-12]]).unwrap();
        let l = VariationalLayer::from_factor(shape, vec![0.4, -0.9], &f).unwrap();
        let d = sample_variational(&l, &mut RngStream::new(0, 0));
        assert!((d.weights[(0, 0)] - 0.4f64).abs() < 1e-10);
        assert!((d.bias[0] + 0.9f64).abs() < 1e-10);
        assert_eq!(d.activation, Activation::Tanh);
    }

    #[test]
    fn sampling_is_deterministic() {
        let l = layer5(&mut RngStream::new(8, 0));
        let a = sample_variational(&l, &mut RngStream::new(8, 1));
        let b = sample_variational(&l, &mut RngStream::new(8, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn kl_at_prior_and_perturbed() {
        let shape = LayerShape::new(2, 1, Activation::Identity);
        let sigma = 0.8;
        let f = Matrix::from_fn(3, 3, |i, j| if i == j { sigma } else { 0.0 });
        let prior = GaussianPrior::new(sigma).unwrap();
        let l = VariationalLayer::from_factor(shape, vec![0.0; 3], &f).unwrap();
        assert!(kl_closed_form(&l, &prior).abs() < 1e-12);
        let mut rng = RngStream::new(6, 0);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let (t, e) = l.sample(&mut rng);
                l.log_q(&e) - prior.log_density(&t)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 3.0 * (var / n as f64).sqrt() + 1e-12);
        let mut shifted = l.clone();
        shifted.mean[1] = 1e-3;
        assert!(kl_closed_form(&shifted, &prior) > 0.0);
        let mut wider = l.clone();
        wider.chol[0] += 1e-3;
        assert!(kl_closed_form(&wider, &prior) > 0.0);
        assert!(kl_to_prior(&l, &prior, 0, &mut rng).is_err());
    }

    #[test]
    fn reparameterized_gradient_of_quadratic() {
        // E[Σ a_i θ_i²] = Σ a_i (μ_i² + Σ_ii), so ∂/∂μ_i = 2 a_i μ_i and
        // ∂/∂L_ij = 2 a_i L_ij.
        let mut rng = RngStream::new(7, 0);
        let l = layer5(&mut rng);
        let a = [1.0, 0.5, 2.0, 1.5, 0.25];
        let n = 200_000;
        let mut g = vec![0.0; l.n_var_params()];
        for _ in 0..n {
            let (t, e) = l.sample(&mut rng);
            let gt: Vec<f64> = t.iter().zip(&a).map(|(t, a)| 2.0 * a * t).collect();
            l.backprop_sample(&e, &gt, &mut g);
        }
        for v in &mut g {
            *v /= n as f64;
        }
        for i in 0..5 {
            assert!((g[i] - 2.0 * a[i] * l.mean[i]).abs() < 0.02, "mu {i}");
            for j in 0..=i {
                let lij = l.factor_entry(i, j);
                let expect = if i == j { 2.0 * a[i] * lij * lij } else { 2.0 * a[i] * lij };
                assert!((g[5 + tri(i, j)] - expect).abs() < 0.01, "L {i},{j}");
            }
        }
    }

    #[test]
    fn network_flat_round_trip() {
        let mut rng = RngStream::new(5, 0);
        let shapes = crate::neural::mlp_shapes(3, &[5], 2, Activation::Tanh);
        let mut v = VariationalNetwork::<f64>::init(shapes, &mut rng).unwrap();
        let flat = v.flat_params();
        assert_eq!(flat.len(), v.n_var_params());
        let shifted: Vec<f64> = flat.iter().map(|x| x + 1.0).collect();
        v.set_flat_params(&shifted).unwrap();
        assert_eq!(v.flat_params(), shifted);
    }
}
