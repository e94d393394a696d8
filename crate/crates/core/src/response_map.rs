//! Estimated lower-level best response `Φ` and the upper-level machinery that
//! works on the restricted path `x_u ↦ (x_u, Φ(x_u))`.

use serde::{Deserialize, Serialize};

use crate::acquisition::InterestSet;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::optim::{lbfgs_box, LbfgsOptions};
use crate::par::Execution;
use crate::sampling::{argmax, sobol_points_seeded, RngStream, ThompsonSampler};

/// Default number of local-optimizer restarts when estimating `Φ`.
pub const DEFAULT_PHI_RESTARTS: usize = 30;

// fixed scramble for the restart design so that Φ depends only on the model
const RESTART_SEED: u32 = 0x5eed_0001;

/// Best-response estimates on a discrete upper-level grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMap {
    upper_grid: Vec<Vec<f64>>,
    responses: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl ResponseMap {
    pub fn len(&self) -> usize {
        self.upper_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper_grid.is_empty()
    }

    pub fn upper_grid(&self) -> &[Vec<f64>] {
        &self.upper_grid
    }

    pub fn responses(&self) -> &[Vec<f64>] {
        &self.responses
    }

    /// Lower posterior means at `(x_u, Φ(x_u))`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Joint points `(x_u, Φ(x_u))` in grid order.
    pub fn joint_points(&self) -> Vec<Vec<f64>> {
        self.upper_grid
            .iter()
            .zip(&self.responses)
            .map(|(u, l)| [u.as_slice(), l.as_slice()].concat())
            .collect()
    }

    /// `Φ(x_u)` for a grid member.
    pub fn response_for(&self, x_u: &[f64]) -> Option<&[f64]> {
        self.upper_grid
            .iter()
            .position(|u| u == x_u)
            .map(|i| self.responses[i].as_slice())
    }
}

/// Maximizes the lower posterior mean over `x_l` with `x_u` held fixed.
/// Returns the maximizer and the posterior mean there.
pub fn estimate_phi_with_value(gp_l: &GpModel, x_u: &[f64], restarts: usize) -> Result<(Vec<f64>, f64)> {
    let d_u = x_u.len();
    if d_u >= gp_l.dim() {
        return Err(Error::Data(format!(
            "upper point has dimension {d_u} but the lower model spans {} joint dimensions",
            gp_l.dim()
        )));
    }
    let d_l = gp_l.dim() - d_u;
    let starts = sobol_points_seeded(d_l, restarts.max(1), RESTART_SEED);
    let lo = vec![0.0; d_l];
    let hi = vec![1.0; d_l];
    let opts = LbfgsOptions {
        max_iters: 50,
        pgtol: 1e-9,
        ftol: 1e-12,
        ..Default::default()
    };
    let mut x = x_u.to_vec();
    x.resize(gp_l.dim(), 0.0);
    let mut grad = vec![0.0; gp_l.dim()];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let m = lbfgs_box(
            |x_l: &[f64], g: &mut [f64]| {
                x[d_u..].copy_from_slice(x_l);
                let v = gp_l.mean_and_grad(&x, &mut grad);
                for (gi, gv) in g.iter_mut().zip(&grad[d_u..]) {
                    *gi = -gv;
                }
                -v
            },
            start,
            &lo,
            &hi,
            &opts,
        );
        if best.as_ref().is_none_or(|(_, v)| -m.value > *v) {
            best = Some((m.x, -m.value));
        }
    }
    Ok(best.expect("at least one restart"))
}

/// `Φ(x_u) = argmax_{x_l} μ_l(x_u, x_l)` by multi-start projected L-BFGS.
pub fn estimate_phi(gp_l: &GpModel, x_u: &[f64], restarts: usize) -> Result<Vec<f64>> {
    Ok(estimate_phi_with_value(gp_l, x_u, restarts)?.0)
}

pub fn build_map(gp_l: &GpModel, upper_grid: &[Vec<f64>], restarts: usize) -> Result<ResponseMap> {
    build_map_with(gp_l, upper_grid, restarts, Execution::default())
}

/// Estimates `Φ` at every grid point.
pub fn build_map_with(
    gp_l: &GpModel,
    upper_grid: &[Vec<f64>],
    restarts: usize,
    exec: Execution,
) -> Result<ResponseMap> {
    if upper_grid.is_empty() {
        return Err(Error::Config("upper grid is empty".into()));
    }
    let estimates: Vec<(Vec<f64>, f64)> = exec
        .map(upper_grid, |x_u| estimate_phi_with_value(gp_l, x_u, restarts))
        .into_iter()
        .collect::<Result<_>>()?;
    let (responses, values) = estimates.into_iter().unzip();
    Ok(ResponseMap {
        upper_grid: upper_grid.to_vec(),
        responses,
        values,
    })
}

/// Thompson sampler for the restricted upper path over a map's grid.
#[derive(Debug, Clone)]
pub struct RestrictedPathSampler<'m> {
    map: &'m ResponseMap,
    sampler: ThompsonSampler,
}

impl<'m> RestrictedPathSampler<'m> {
    pub fn new(gp_u: &GpModel, map: &'m ResponseMap) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::Config("response map is empty".into()));
        }
        Ok(Self {
            map,
            sampler: ThompsonSampler::new(gp_u, &map.joint_points())?,
        })
    }

    /// Grid index of the maximizer of one restricted sample path.
    pub fn draw_index(&self, stream: &mut RngStream) -> usize {
        self.sampler.draw_argmax(stream).0
    }

    pub fn draw(&self, stream: &mut RngStream) -> Vec<f64> {
        self.map.upper_grid[self.draw_index(stream)].clone()
    }
}

/// Upper component of the argmax of one sample of `Fⁿ(x_u, Φ(x_u))` over the
/// map's grid.
pub fn restricted_ts_argmax(gp_u: &GpModel, map: &ResponseMap, stream: &mut RngStream) -> Result<Vec<f64>> {
    Ok(RestrictedPathSampler::new(gp_u, map)?.draw(stream))
}

/// `k` restricted Thompson draws with uniform weights; duplicates are kept.
pub fn sample_interest_set(gp_u: &GpModel, map: &ResponseMap, k: usize, stream: &mut RngStream) -> Result<InterestSet> {
    if k == 0 {
        return Err(Error::Config("interest set size must be at least 1".into()));
    }
    let sampler = RestrictedPathSampler::new(gp_u, map)?;
    let points = (0..k).map(|_| sampler.draw(stream)).collect();
    InterestSet::uniform(points)
}

/// Grid index maximizing the restricted upper posterior mean.
pub fn recommend_index(gp_u: &GpModel, map: &ResponseMap) -> Result<usize> {
    if map.is_empty() {
        return Err(Error::Config("response map is empty".into()));
    }
    let means: Vec<f64> = map.joint_points().iter().map(|p| gp_u.mean(p)).collect();
    Ok(argmax(&means))
}

/// `argmax_{x_u ∈ grid} μ_u(x_u, Φ(x_u))`.
pub fn recommend(gp_u: &GpModel, map: &ResponseMap) -> Result<Vec<f64>> {
    Ok(map.upper_grid[recommend_index(gp_u, map)?].clone())
}
