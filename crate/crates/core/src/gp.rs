//! Exact Gaussian-process regression over the unit box.
//!
//! Observations are z-scored before fitting; kernel hyperparameters, the
//! constant mean and the noise all live in standardized units, and
//! predictions are mapped back to raw units on the way out.
//!
//! Hyperparameters are chosen by multi-start projected L-BFGS on the log
//! marginal likelihood, parameterized as
//! `[ln ℓ_1, …, ln ℓ_d, ln σ², ln ε², c]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jittered_cholesky, Factor};
use crate::optim::{lbfgs_box, LbfgsOptions};

/// Smallest admissible observation-noise variance.
pub const NOISE_FLOOR: f64 = 1e-6;

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Matern52,
    SquaredExponential,
}

/// Stationary ARD kernel plus a constant prior mean.
///
/// `output_scale` is the prior variance `k(x, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub output_scale: f64,
    pub constant_mean: f64,
}

impl KernelConfig {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, output_scale: f64, constant_mean: f64) -> Result<Self> {
        if lengthscales.is_empty() || lengthscales.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Config("lengthscales must be finite and strictly positive".into()));
        }
        if !(output_scale > 0.0) || !output_scale.is_finite() {
            return Err(Error::Config("output scale must be finite and strictly positive".into()));
        }
        if !constant_mean.is_finite() {
            return Err(Error::Config("constant mean must be finite".into()));
        }
        Ok(Self {
            family,
            lengthscales,
            output_scale,
            constant_mean,
        })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `k(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum();
        self.output_scale * self.shape(r2)
    }

    fn shape(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
            }
            KernelFamily::SquaredExponential => (-0.5 * r2).exp(),
        }
    }

    /// `-(1/r) dk/dr / σ²`: the common factor of every derivative with respect
    /// to inputs or log-lengthscales.
    fn radial_factor(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
            }
            KernelFamily::SquaredExponential => (-0.5 * r2).exp(),
        }
    }

    /// Adds `w · ∂k(x, b)/∂x` into `grad` and returns `k(x, b)`.
    fn eval_with_input_grad(&self, x: &[f64], b: &[f64], w: f64, grad: &mut [f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((p, q), l)| {
                let t = (p - q) / l;
                t * t
            })
            .sum();
        let c = -w * self.output_scale * self.radial_factor(r2);
        for j in 0..x.len() {
            let l = self.lengthscales[j];
            grad[j] += c * (x[j] - b[j]) / (l * l);
        }
        self.output_scale * self.shape(r2)
    }
}

/// Observations over the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    d: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

fn check_point(d: usize, x: &[f64]) -> Result<()> {
    if x.len() != d {
        return Err(Error::Data(format!("point has dimension {} but dataset has {d}", x.len())));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Data(format!("point {x:?} lies outside the unit box")));
    }
    Ok(())
}

impl Dataset {
    /// An empty dataset of dimension `d`.
    pub fn empty(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("dataset dimension must be at least 1".into()));
        }
        Ok(Self {
            d,
            points: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Data(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let Some(first) = points.first() else {
            return Err(Error::Config("dataset is empty".into()));
        };
        let d = first.len();
        let mut ds = Self::empty(d)?;
        for (x, y) in points.into_iter().zip(values) {
            ds.push(x, y)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        check_point(self.d, &x)?;
        self.points.push(x);
        self.values.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the best observation (lowest index on ties).
    pub fn argmax(&self) -> Option<usize> {
        if self.is_empty() {
            None
        } else {
            Some(crate::sampling::argmax(&self.values))
        }
    }
}

/// Affine z-score map `z = (y - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: f64,
    pub scale: f64,
}

impl Standardization {
    /// Mean and sample standard deviation of `values`; the scale falls back to
    /// one when the values carry no spread.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let shift = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
        let scale = if n < 2 {
            1.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - shift).powi(2)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if sd > 1e-12 * shift.abs().max(1.0) {
                sd
            } else {
                1.0
            }
        };
        Self { shift, scale }
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        self.shift + self.scale * z
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of multi-start runs.
    pub restarts: usize,
    pub max_iters: usize,
    pub lengthscale_bounds: (f64, f64),
    pub output_scale_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    pub mean_bounds: (f64, f64),
    /// Gamma `(shape, rate)` prior on every lengthscale, turning the fit into
    /// a MAP estimate; `None` maximizes the plain marginal likelihood.
    pub lengthscale_prior: Option<(f64, f64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 60,
            lengthscale_bounds: (1e-3, 10.0),
            output_scale_bounds: (1e-3, 1e3),
            noise_bounds: (NOISE_FLOOR, 1e-1),
            mean_bounds: (-5.0, 5.0),
            lengthscale_prior: None,
        }
    }
}

impl FitOptions {
    /// Box for the unconstrained parameter vector.
    pub fn parameter_bounds(&self, d: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.lengthscale_bounds.0.ln(); d];
        let mut hi = vec![self.lengthscale_bounds.1.ln(); d];
        lo.push(self.output_scale_bounds.0.ln());
        hi.push(self.output_scale_bounds.1.ln());
        lo.push(self.noise_bounds.0.ln());
        hi.push(self.noise_bounds.1.ln());
        lo.push(self.mean_bounds.0);
        hi.push(self.mean_bounds.1);
        (lo, hi)
    }
}

/// Kernel hyperparameters and noise in one bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub kernel: KernelConfig,
    pub noise: f64,
}

impl Hyperparameters {
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.kernel.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.kernel.output_scale.ln());
        v.push(self.noise.ln());
        v.push(self.kernel.constant_mean);
        v
    }

    pub fn from_vector(family: KernelFamily, theta: &[f64]) -> Self {
        let d = theta.len() - 3;
        Self {
            kernel: KernelConfig {
                family,
                lengthscales: theta[..d].iter().map(|v| v.exp()).collect(),
                output_scale: theta[d].exp(),
                constant_mean: theta[d + 2],
            },
            noise: theta[d + 1].exp(),
        }
    }
}

fn gram(kernel: &KernelConfig, points: &[Vec<f64>], noise: f64) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kernel.output_scale + noise;
        for j in 0..i {
            let v = kernel.eval(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Log marginal likelihood of standardized targets `y` and its gradient with
/// respect to the parameter vector described in the module docs.
///
/// Returns `None` when the Gram matrix cannot be factorized.
pub fn log_marginal_likelihood(
    family: KernelFamily,
    points: &[Vec<f64>],
    y: &[f64],
    theta: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let n = points.len();
    let d = theta.len() - 3;
    let hp = Hyperparameters::from_vector(family, theta);
    let k = gram(&hp.kernel, points, hp.noise);
    let factor = jittered_cholesky(&k).ok()?;
    let resid = DVector::from_iterator(n, y.iter().map(|v| v - hp.kernel.constant_mean));
    let alpha = factor.solve(&resid);
    let value = -0.5 * resid.dot(&alpha) - 0.5 * factor.log_det() - 0.5 * n as f64 * LN_2PI;

    // dL/dθ = ½ tr(W ∂K/∂θ) with W = ααᵀ − K⁻¹
    let kinv = factor.chol.inverse();
    let mut grad = vec![0.0; theta.len()];
    let inv_l2: Vec<f64> = hp.kernel.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
    let mut noise_trace = 0.0;
    for i in 0..n {
        let w_ii = alpha[i] * alpha[i] - kinv[(i, i)];
        grad[d] += 0.5 * w_ii * hp.kernel.output_scale;
        noise_trace += w_ii;
        for j in 0..i {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let (a, b) = (&points[i], &points[j]);
            let mut r2 = 0.0;
            for m in 0..d {
                let t = a[m] - b[m];
                r2 += t * t * inv_l2[m];
            }
            let kv = hp.kernel.output_scale * hp.kernel.shape(r2);
            let rf = hp.kernel.output_scale * hp.kernel.radial_factor(r2);
            // off-diagonal pairs appear twice in the trace
            grad[d] += w * kv;
            for m in 0..d {
                let t = a[m] - b[m];
                grad[m] += w * rf * t * t * inv_l2[m];
            }
        }
    }
    grad[d + 1] = 0.5 * noise_trace * hp.noise;
    grad[d + 2] = alpha.sum();
    Some((value, grad))
}

/// Gamma log density (up to a constant) of the lengthscales `exp(θ)`; adds
/// its derivative with respect to each `θ` into `grad`.
fn log_lengthscale_prior((shape, rate): (f64, f64), log_ls: &[f64], grad: &mut [f64]) -> f64 {
    let mut v = 0.0;
    for (t, g) in log_ls.iter().zip(grad) {
        let l = t.exp();
        v += (shape - 1.0) * t - rate * l;
        *g += (shape - 1.0) - rate * l;
    }
    v
}

/// A fitted, immutable Gaussian-process posterior.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: Hyperparameters,
    dataset: Dataset,
    standardization: Standardization,
    factor: Factor,
    /// `K⁻¹ (z − c)` for standardized targets `z`.
    alpha: DVector<f64>,
    targets: Vec<f64>,
}

fn validate_for_fit(dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Config("cannot fit a GP to an empty dataset".into()));
    }
    if dataset.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("dataset contains non-finite values".into()));
    }
    Ok(())
}

impl GpModel {
    /// Fits hyperparameters with the default [`FitOptions`].
    pub fn fit(dataset: &Dataset, family: KernelFamily, seed: u64) -> Result<Self> {
        Self::fit_with(dataset, family, seed, &FitOptions::default(), None)
    }

    /// Multi-start maximization of the log marginal likelihood.
    ///
    /// The first start is `warm_start` when given (clamped into the bounds),
    /// otherwise a fixed central guess; the remaining starts are drawn from a
    /// generator seeded by `seed`. Deterministic in all inputs.
    pub fn fit_with(
        dataset: &Dataset,
        family: KernelFamily,
        seed: u64,
        opts: &FitOptions,
        warm_start: Option<&Hyperparameters>,
    ) -> Result<Self> {
        validate_for_fit(dataset)?;
        let d = dataset.dim();
        let standardization = Standardization::from_values(&dataset.values);
        let z: Vec<f64> = dataset.values.iter().map(|&v| standardization.apply(v)).collect();
        let (lo, hi) = opts.parameter_bounds(d);

        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.restarts.max(1));
        let first = match warm_start {
            Some(h) if h.kernel.dim() == d && h.kernel.family == family => h.to_vector(),
            _ => {
                let mut v = vec![(0.3f64).ln(); d];
                v.extend([0.0, (1e-4f64).ln(), 0.0]);
                v
            }
        };
        starts.push(first);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while starts.len() < opts.restarts.max(1) {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range((0.05f64).ln()..(2.0f64).ln())).collect();
            v.push(rng.random_range((0.2f64).ln()..(5.0f64).ln()));
            v.push(rng.random_range((1e-6f64).ln()..(1e-2f64).ln()));
            v.push(rng.random_range(-0.5..0.5));
            starts.push(v);
        }

        let lbfgs = LbfgsOptions {
            max_iters: opts.max_iters,
            pgtol: 1e-5,
            ftol: 1e-9,
            ..Default::default()
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mut x0 in starts {
            for (i, v) in x0.iter_mut().enumerate() {
                *v = v.clamp(lo[i], hi[i]);
            }
            let objective = |theta: &[f64], g: &mut [f64]| match log_marginal_likelihood(family, &dataset.points, &z, theta)
            {
                Some((mut v, mut grad)) => {
                    if let Some(prior) = opts.lengthscale_prior {
                        v += log_lengthscale_prior(prior, &theta[..d], &mut grad[..d]);
                    }
                    for (gi, gv) in g.iter_mut().zip(grad) {
                        *gi = -gv;
                    }
                    -v
                }
                None => f64::INFINITY,
            };
            let m = lbfgs_box(objective, &x0, &lo, &hi, &lbfgs);
            if m.value.is_finite() && best.as_ref().is_none_or(|(v, _)| m.value < *v) {
                best = Some((m.value, m.x));
            }
        }
        let Some((_, theta)) = best else {
            return Err(Error::Numerical("no hyperparameter start produced a factorizable Gram matrix".into()));
        };
        let hyper = Hyperparameters::from_vector(family, &theta);
        Self::assemble(dataset.clone(), hyper, standardization)
    }

    /// Builds a posterior with fixed hyperparameters (given in standardized
    /// units); the standardization is computed from the data.
    pub fn with_hyperparameters(dataset: &Dataset, kernel: KernelConfig, noise: f64) -> Result<Self> {
        validate_for_fit(dataset)?;
        let standardization = Standardization::from_values(&dataset.values);
        Self::with_standardization(dataset, kernel, noise, standardization)
    }

    /// Like [`GpModel::with_hyperparameters`] with an explicit standardization.
    pub fn with_standardization(
        dataset: &Dataset,
        kernel: KernelConfig,
        noise: f64,
        standardization: Standardization,
    ) -> Result<Self> {
        validate_for_fit(dataset)?;
        if kernel.dim() != dataset.dim() {
            return Err(Error::Data(format!(
                "kernel has {} lengthscales for {}-dimensional data",
                kernel.dim(),
                dataset.dim()
            )));
        }
        if !(standardization.scale > 0.0) {
            return Err(Error::Config("standardization scale must be positive".into()));
        }
        let noise = noise.max(NOISE_FLOOR);
        Self::assemble(dataset.clone(), Hyperparameters { kernel, noise }, standardization)
    }

    fn assemble(dataset: Dataset, hyper: Hyperparameters, standardization: Standardization) -> Result<Self> {
        let k = gram(&hyper.kernel, &dataset.points, hyper.noise);
        let factor = jittered_cholesky(&k)?;
        let targets: Vec<f64> = dataset.values.iter().map(|&v| standardization.apply(v)).collect();
        let resid = DVector::from_iterator(targets.len(), targets.iter().map(|z| z - hyper.kernel.constant_mean));
        let alpha = factor.solve(&resid);
        Ok(Self {
            hyper,
            dataset,
            standardization,
            factor,
            alpha,
            targets,
        })
    }

    /// Posterior after one more observation, keeping hyperparameters and
    /// standardization fixed.
    pub fn condition_on(&self, x: Vec<f64>, y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::Data("observation is not finite".into()));
        }
        let mut ds = self.dataset.clone();
        ds.push(x, y)?;
        Self::assemble(ds, self.hyper.clone(), self.standardization)
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.hyper.kernel
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    /// Observation-noise variance in standardized units.
    pub fn noise(&self) -> f64 {
        self.hyper.noise
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    /// Diagonal jitter that was needed to factorize the Gram matrix.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// Log marginal likelihood of the standardized data at the current
    /// hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let resid = DVector::from_iterator(
            self.targets.len(),
            self.targets.iter().map(|z| z - self.hyper.kernel.constant_mean),
        );
        -0.5 * resid.dot(&self.alpha) - 0.5 * self.factor.log_det() - 0.5 * self.targets.len() as f64 * LN_2PI
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Data(format!(
                "query has dimension {} but the model has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dataset.len(),
            self.dataset.points.iter().map(|p| self.hyper.kernel.eval(x, p)),
        )
    }

    fn mean_std_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = self.hyper.kernel.constant_mean;
        for (p, a) in self.dataset.points.iter().zip(self.alpha.iter()) {
            acc += a * self.hyper.kernel.eval(x, p);
        }
        acc
    }

    /// Posterior mean in raw units, without a dimension check.
    pub fn mean(&self, x: &[f64]) -> f64 {
        self.standardization.invert(self.mean_std_unchecked(x))
    }

    /// Posterior mean in raw units and its gradient with respect to `x`.
    pub fn mean_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acc = self.hyper.kernel.constant_mean;
        for (p, a) in self.dataset.points.iter().zip(self.alpha.iter()) {
            acc += a * self.hyper.kernel.eval_with_input_grad(x, p, *a, grad);
        }
        grad.iter_mut().for_each(|g| *g *= self.standardization.scale);
        self.standardization.invert(acc)
    }

    /// Posterior mean and variance at `x`, in raw units.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(x)?;
        let kx = self.cross(x);
        let mean = self.hyper.kernel.constant_mean + kx.dot(&self.alpha);
        let v = self.factor.solve_lower(&kx);
        let var = clamp_variance(self.hyper.kernel.output_scale - v.dot(&v));
        let s = self.standardization.scale;
        Ok((self.standardization.invert(mean), s * s * var))
    }

    /// Posterior covariance `kⁿ(x, x')` in raw units.
    pub fn posterior_cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(x2)?;
        let v1 = self.factor.solve_lower(&self.cross(x));
        let v2 = self.factor.solve_lower(&self.cross(x2));
        let mut c = self.hyper.kernel.eval(x, x2) - v1.dot(&v2);
        if x == x2 {
            c = clamp_variance(c);
        }
        let s = self.standardization.scale;
        Ok(s * s * c)
    }

    /// `L⁻¹ K(X, P)` for query points `P`, one column per point.
    pub(crate) fn whitened_cross(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = self.dataset.len();
        let kxp = DMatrix::from_fn(n, points.len(), |i, j| self.hyper.kernel.eval(&self.dataset.points[i], &points[j]));
        self.factor.solve_lower_mat(&kxp)
    }

    /// Joint posterior mean vector and covariance matrix at `points`, in
    /// standardized units.
    pub fn joint_posterior_standardized(&self, points: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        for p in points {
            self.check_dim(p)?;
        }
        let m = points.len();
        let v = self.whitened_cross(points);
        let mean = DVector::from_iterator(m, points.iter().map(|p| self.mean_std_unchecked(p)));
        let mut cov = v.tr_mul(&v);
        for i in 0..m {
            for j in 0..=i {
                let c = self.hyper.kernel.eval(&points[i], &points[j]) - cov[(i, j)];
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
            cov[(i, i)] = clamp_variance(cov[(i, i)]);
        }
        Ok((mean, cov))
    }

    /// One-step fantasy coefficients for a query at `candidate`.
    ///
    /// Returns the current posterior means `μⁿ` at `targets` and
    /// `σ̃ = kⁿ(·, candidate) / sqrt(kⁿ(candidate, candidate) + ε²)`, both in
    /// raw units, so that the posterior mean after observing `candidate` is
    /// distributed as `μⁿ + σ̃ Z` with `Z ~ N(0, 1)`.
    pub fn fantasy_coefficients(&self, targets: &[Vec<f64>], candidate: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dim(candidate)?;
        for p in targets {
            self.check_dim(p)?;
        }
        let prepared = FantasyTargets::new(self, targets);
        prepared.coefficients(self, candidate)
    }
}

fn clamp_variance(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

/// Precomputed quantities for evaluating fantasy coefficients of many
/// candidates against a fixed target set.
#[derive(Debug, Clone)]
pub struct FantasyTargets {
    points: Vec<Vec<f64>>,
    means: Vec<f64>,
    whitened: DMatrix<f64>,
}

impl FantasyTargets {
    pub fn new(gp: &GpModel, points: &[Vec<f64>]) -> Self {
        Self {
            points: points.to_vec(),
            means: points.iter().map(|p| gp.mean(p)).collect(),
            whitened: gp.whitened_cross(points),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// `(μⁿ, σ̃)` for a query at `candidate`.
    pub fn coefficients(&self, gp: &GpModel, candidate: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.means.clone(), self.sigma_tilde(gp, candidate)?))
    }

    /// Just the `σ̃` vector.
    pub fn sigma_tilde(&self, gp: &GpModel, candidate: &[f64]) -> Result<Vec<f64>> {
        let kern = &gp.hyper.kernel;
        let vc = gp.factor.solve_lower(&gp.cross(candidate));
        let pred_var = clamp_variance(kern.output_scale - vc.dot(&vc)) + gp.hyper.noise;
        if !(pred_var > 0.0) {
            return Err(Error::DegenerateCandidate);
        }
        let denom = pred_var.sqrt();
        let proj = self.whitened.tr_mul(&vc);
        let s = gp.standardization.scale;
        Ok(self
            .points
            .iter()
            .zip(proj.iter())
            .map(|(p, pv)| s * (kern.eval(p, candidate) - pv) / denom)
            .collect())
    }
}
