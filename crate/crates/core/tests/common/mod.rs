//! Independent reference computations used by the integration tests.
//!
//! Nothing here calls into the library's numerical code: kernels, linear
//! solves, normal densities and expectations are written out directly.

#![allow(dead_code)]

use bilbao_core::gp::{KernelConfig, KernelFamily};
use bilbao_core::sampling::RngStream;

pub fn kernel(k: &KernelConfig, a: &[f64], b: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for i in 0..a.len() {
        let t = (a[i] - b[i]) / k.lengthscales[i];
        r2 += t * t;
    }
    let shape = match k.family {
        KernelFamily::Matern52 => {
            let r = r2.sqrt();
            (1.0 + 5f64.sqrt() * r + 5.0 * r2 / 3.0) * (-(5f64.sqrt()) * r).exp()
        }
        KernelFamily::SquaredExponential => (-0.5 * r2).exp(),
    };
    k.output_scale * shape
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Dense evaluation of the GP posterior with hand-fixed hyperparameters and
/// z-scored targets (sample standard deviation).
pub struct DenseGp {
    pub kernel: KernelConfig,
    pub noise: f64,
    pub points: Vec<Vec<f64>>,
    pub shift: f64,
    pub scale: f64,
    /// `(K + ε² I)⁻¹ (z − c)`.
    pub alpha: Vec<f64>,
    gram: Vec<Vec<f64>>,
}

impl DenseGp {
    pub fn new(k: KernelConfig, noise: f64, points: Vec<Vec<f64>>, values: &[f64]) -> Self {
        let n = values.len();
        let shift = values.iter().sum::<f64>() / n as f64;
        let scale = if n > 1 {
            (values.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            1.0
        };
        let gram: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| kernel(&k, &points[i], &points[j]) + if i == j { noise } else { 0.0 }).collect())
            .collect();
        let resid: Vec<f64> = values.iter().map(|v| (v - shift) / scale - k.constant_mean).collect();
        let alpha = solve(&gram, &resid);
        Self { kernel: k, noise, points, shift, scale, alpha, gram }
    }

    fn cross(&self, x: &[f64]) -> Vec<f64> {
        self.points.iter().map(|p| kernel(&self.kernel, x, p)).collect()
    }

    /// Posterior covariance in standardized units.
    pub fn cov_std(&self, x: &[f64], y: &[f64]) -> f64 {
        let kx = self.cross(x);
        let ky = self.cross(y);
        let w = solve(&self.gram, &ky);
        kernel(&self.kernel, x, y) - kx.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        let kx = self.cross(x);
        let m = self.kernel.constant_mean + kx.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        self.shift + self.scale * m
    }

    pub fn cov(&self, x: &[f64], y: &[f64]) -> f64 {
        self.scale * self.scale * self.cov_std(x, y)
    }

    /// `(μⁿ, σ̃)` for a query at `candidate`, in raw units.
    pub fn fantasy(&self, targets: &[Vec<f64>], candidate: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let denom = (self.cov_std(candidate, candidate) + self.noise).sqrt();
        let mu = targets.iter().map(|t| self.mean(t)).collect();
        let sig = targets.iter().map(|t| self.scale * self.cov_std(t, candidate) / denom).collect();
        (mu, sig)
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite Simpson rule of `g(z) φ(z)` over `[-lim, lim]`.
pub fn gaussian_expectation<G: Fn(f64) -> f64>(g: G, lim: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = 2.0 * lim / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let z = -lim + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(z) * normal_pdf(z);
    }
    acc * h / 3.0
}

/// Monte Carlo estimate (mean, standard error) of `E[max_i(a_i + b_i Z)] − max a`.
pub fn mc_max_gain(a: &[f64], b: &[f64], draws: usize, stream: &mut RngStream) -> (f64, f64) {
    let base = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut s, mut ss) = (0.0, 0.0);
    for _ in 0..draws {
        let z = stream.standard_normal();
        let m = a.iter().zip(b).map(|(ai, bi)| ai + bi * z).fold(f64::NEG_INFINITY, f64::max) - base;
        s += m;
        ss += m * m;
    }
    let n = draws as f64;
    let mean = s / n;
    let var = (ss / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Centered L2 discrepancy of a point set in `[0,1]^d`.
pub fn centered_l2_discrepancy(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points[0].len() as i32;
    let mut t2 = 0.0;
    for p in points {
        let mut prod = 1.0;
        for &x in p {
            let a = (x - 0.5).abs();
            prod *= 1.0 + 0.5 * a - 0.5 * a * a;
        }
        t2 += prod;
    }
    let mut t3 = 0.0;
    for p in points {
        for q in points {
            let mut prod = 1.0;
            for k in 0..p.len() {
                prod *= 1.0 + 0.5 * (p[k] - 0.5).abs() + 0.5 * (q[k] - 0.5).abs() - 0.5 * (p[k] - q[k]).abs();
            }
            t3 += prod;
        }
    }
    ((13.0f64 / 12.0).powi(d) - 2.0 / n * t2 + t3 / (n * n)).sqrt()
}

pub fn uniform_points(d: usize, n: usize, stream: &mut RngStream) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| stream.uniform()).collect()).collect()
}

pub fn uniform_in(stream: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * stream.uniform()
}

/// A random small GP instance: `n` points in `d` dimensions with smooth
/// targets and moderate hyperparameters.
pub fn random_instance(stream: &mut RngStream, d: usize, n: usize, family: KernelFamily) -> (Vec<Vec<f64>>, Vec<f64>, KernelConfig, f64) {
    let points = uniform_points(d, n, stream);
    let phase = uniform_in(stream, 0.0, 6.0);
    let values: Vec<f64> = points.iter().map(|p| (phase + 5.0 * p.iter().sum::<f64>()).sin() + 0.3 * p[0]).collect();
    let ls: Vec<f64> = (0..d).map(|_| uniform_in(stream, 0.15, 0.8)).collect();
    let kernel = KernelConfig::new(family, ls, uniform_in(stream, 0.5, 2.0), uniform_in(stream, -0.5, 0.5)).unwrap();
    let noise = uniform_in(stream, 1e-4, 1e-2);
    (points, values, kernel, noise)
}
