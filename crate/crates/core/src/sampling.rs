//! Reproducible randomness: counter-based streams, scrambled Sobol designs,
//! multivariate-normal draws and Thompson sampling on finite candidate sets.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::linalg::jittered_cholesky;

/// A replayable random stream identified by `(master_seed, stream_id)`.
///
/// Backed by ChaCha8, whose keystream is addressed by (key, stream, counter),
/// so distinct stream ids never overlap and a stream can be rebuilt from its
/// two identifiers alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Largest supported Sobol dimension.
pub const SOBOL_MAX_DIM: usize = sobol_burley::NUM_DIMENSIONS as usize;
/// Largest supported number of Sobol points per design.
pub const SOBOL_MAX_POINTS: usize = 1 << 16;

/// First `n` points of an Owen-scrambled Sobol sequence in `[0,1)^d`, with the
/// scramble seed drawn from `stream`.
pub fn sobol_points(d: usize, n: usize, stream: &mut RngStream) -> Vec<Vec<f64>> {
    let seed = stream.next_u32();
    sobol_points_seeded(d, n, seed)
}

/// Sobol design with an explicit scramble seed.
pub fn sobol_points_seeded(d: usize, n: usize, seed: u32) -> Vec<Vec<f64>> {
    assert!(d >= 1 && d <= SOBOL_MAX_DIM, "sobol dimension {d} out of range");
    assert!(n >= 1 && n <= SOBOL_MAX_POINTS, "sobol point count {n} out of range");
    (0..n as u32)
        .map(|i| {
            (0..d as u32)
                .map(|j| sobol_burley::sample(i, j, seed) as f64)
                .collect()
        })
        .collect()
}

/// Draws from `N(mean, cov)` through a jittered Cholesky factor.
///
/// Coordinates with zero variance are deterministic and are returned at their
/// mean; only the remaining block is factorized. The factor is computed once,
/// so repeated draws from the same distribution are cheap.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: Vec<f64>,
    random_coords: Vec<usize>,
    lower: Option<DMatrix<f64>>,
}

impl MvnSampler {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::Data(format!(
                "covariance is {}x{} but mean has length {m}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let random_coords: Vec<usize> = (0..m).filter(|&i| cov[(i, i)] > 0.0).collect();
        let lower = if random_coords.is_empty() {
            None
        } else {
            let k = random_coords.len();
            let sub = DMatrix::from_fn(k, k, |a, b| cov[(random_coords[a], random_coords[b])]);
            Some(jittered_cholesky(&sub)?.l())
        };
        Ok(Self {
            mean: mean.to_vec(),
            random_coords,
            lower,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, stream: &mut RngStream) -> Vec<f64> {
        let mut out = self.mean.clone();
        if let Some(l) = &self.lower {
            let z = DVector::from_fn(self.random_coords.len(), |_, _| stream.standard_normal());
            let lz = l * z;
            for (k, &i) in self.random_coords.iter().enumerate() {
                out[i] += lz[k];
            }
        }
        out
    }
}

/// One draw of `mean + L z`.
pub fn mvn_sample(mean: &[f64], cov: &DMatrix<f64>, stream: &mut RngStream) -> Result<Vec<f64>> {
    Ok(MvnSampler::new(mean, cov)?.sample(stream))
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Joint posterior sampler over a fixed candidate set.
///
/// Samples are drawn in the model's standardized units and mapped back to raw
/// units, so the jitter sequence acts on a unit-scale covariance.
#[derive(Debug, Clone)]
pub struct ThompsonSampler {
    sampler: MvnSampler,
    shift: f64,
    scale: f64,
}

impl ThompsonSampler {
    pub fn new(gp: &GpModel, candidates: &[Vec<f64>]) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Data("thompson sampling needs at least one candidate".into()));
        }
        let (mean, cov) = gp.joint_posterior_standardized(candidates)?;
        let s = gp.standardization();
        Ok(Self {
            sampler: MvnSampler::new(mean.as_slice(), &cov)?,
            shift: s.shift,
            scale: s.scale,
        })
    }

    /// Draws one joint sample path; returns its argmax index and the sampled
    /// value there in raw units.
    pub fn draw_argmax(&self, stream: &mut RngStream) -> (usize, f64) {
        let path = self.sampler.sample(stream);
        let i = argmax(&path);
        (i, self.shift + self.scale * path[i])
    }
}

/// Thompson sampling over `candidates`: argmax of one joint posterior draw.
pub fn thompson_argmax(
    gp: &GpModel,
    candidates: &[Vec<f64>],
    stream: &mut RngStream,
) -> Result<(usize, f64)> {
    Ok(ThompsonSampler::new(gp, candidates)?.draw_argmax(stream))
}
