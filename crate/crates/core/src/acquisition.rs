//! Acquisition functions: expected improvement, the fixed-task discrete
//! knowledge gradient, REVI and REVITS.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp::{FantasyTargets, GpModel};
use crate::optim::{pattern_search, PatternSearchOptions};
use crate::par::Execution;
use crate::sampling::{argmax, sobol_points, thompson_argmax, RngStream};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `E[max(Y − incumbent, 0)]` for `Y ~ N(mean, std²)`.
pub fn expected_improvement(mean: f64, std: f64, incumbent: f64) -> f64 {
    let diff = mean - incumbent;
    if !(std > 0.0) {
        return diff.max(0.0);
    }
    let z = diff / std;
    (diff * norm_cdf(z) + std * norm_pdf(z)).max(0.0)
}

/// `E[max_i (a_i + b_i Z)] − max_i a_i` for standard normal `Z`.
///
/// Exact: lines are sorted by slope, dominated lines are dropped while the
/// upper envelope is built, and each envelope breakpoint `c` contributes
/// `(b_{k+1} − b_k) · (−|c| Φ(−|c|) + φ(c))`. Every term is nonnegative.
pub fn expected_max_gain(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| b[i].total_cmp(&b[j]).then(a[i].total_cmp(&a[j])));
    // among equal slopes only the largest intercept can be on the envelope
    let mut lines: Vec<(f64, f64)> = Vec::with_capacity(order.len());
    for &i in &order {
        if let Some(last) = lines.last_mut() {
            if last.1 == b[i] {
                *last = (a[i], b[i]);
                continue;
            }
        }
        lines.push((a[i], b[i]));
    }

    // envelope entries: (intercept, slope, z at which the line takes over)
    let mut env: Vec<(f64, f64, f64)> = Vec::with_capacity(lines.len());
    for (ai, bi) in lines {
        loop {
            let Some(&(aj, bj, cj)) = env.last() else {
                env.push((ai, bi, f64::NEG_INFINITY));
                break;
            };
            let z = (aj - ai) / (bi - bj);
            if env.len() > 1 && z <= cj {
                env.pop();
                continue;
            }
            env.push((ai, bi, z));
            break;
        }
    }

    env.windows(2)
        .map(|w| {
            let (_, b0, _) = w[0];
            let (_, b1, c) = w[1];
            let u = -c.abs();
            (b1 - b0) * (u * norm_cdf(u) + norm_pdf(u))
        })
        .sum::<f64>()
        .max(0.0)
}

/// Upper-level points whose lower-level slices the REVI sum ranges over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestSet {
    upper_points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl InterestSet {
    pub fn uniform(upper_points: Vec<Vec<f64>>) -> Result<Self> {
        let k = upper_points.len();
        Self::new(upper_points, vec![1.0 / k.max(1) as f64; k])
    }

    pub fn new(upper_points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if upper_points.is_empty() {
            return Err(Error::Config("interest set needs at least one point".into()));
        }
        if weights.len() != upper_points.len() {
            return Err(Error::Data("interest weights and points differ in length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Data("interest weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Data(format!("interest weights sum to {total}, not 1")));
        }
        Ok(Self { upper_points, weights })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.upper_points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.upper_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper_points.is_empty()
    }

    /// Distinct points in first-occurrence order with their summed weights.
    pub fn merged(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        let mut ws: Vec<f64> = Vec::new();
        for (p, w) in self.upper_points.iter().zip(&self.weights) {
            match pts.iter().position(|q| q == p) {
                Some(i) => ws[i] += w,
                None => {
                    pts.push(p.clone());
                    ws.push(*w);
                }
            }
        }
        (pts, ws)
    }
}

/// Discretization of the lower-level box used for every fixed-task slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDiscretization {
    lower_points: Vec<Vec<f64>>,
}

impl SliceDiscretization {
    pub fn new(lower_points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = lower_points.first() else {
            return Err(Error::Config("slice discretization is empty".into()));
        };
        let d = first.len();
        for p in &lower_points {
            if p.len() != d || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Data(format!("slice point {p:?} is malformed or outside the lower box")));
            }
        }
        Ok(Self { lower_points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.lower_points
    }

    pub fn len(&self) -> usize {
        self.lower_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower_points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.lower_points[0].len()
    }
}

fn joint(x_u: &[f64], x_l: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x_u.len() + x_l.len());
    v.extend_from_slice(x_u);
    v.extend_from_slice(x_l);
    v
}

fn check_joint(gp: &GpModel, x: &[f64], what: &str) -> Result<()> {
    if x.len() != gp.dim() {
        return Err(Error::Data(format!(
            "{what} has dimension {} but the model has {}",
            x.len(),
            gp.dim()
        )));
    }
    Ok(())
}

/// A knowledge-gradient value with a flag for degenerate candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KgOutcome {
    pub value: f64,
    /// The candidate had zero predictive variance and zero noise; `value` is 0.
    pub degenerate: bool,
}

/// Evaluates REVI for many candidates against a fixed interest set and slice
/// discretization, sharing all candidate-independent work.
#[derive(Debug, Clone)]
pub struct ReviEvaluator<'a> {
    gp: &'a GpModel,
    weights: Vec<f64>,
    slice_len: usize,
    targets: FantasyTargets,
}

impl<'a> ReviEvaluator<'a> {
    pub fn new(gp: &'a GpModel, interest: &InterestSet, disc: &SliceDiscretization) -> Result<Self> {
        let (upper, weights) = interest.merged();
        let mut slice_points = Vec::with_capacity(upper.len() * disc.len());
        for x_u in &upper {
            for x_l in disc.points() {
                let p = joint(x_u, x_l);
                check_joint(gp, &p, "slice point")?;
                slice_points.push(p);
            }
        }
        Ok(Self {
            gp,
            weights,
            slice_len: disc.len(),
            targets: FantasyTargets::new(gp, &slice_points),
        })
    }

    /// Fixed-task knowledge gradients, one per distinct interest point, and
    /// whether the candidate was degenerate.
    pub fn kg_terms(&self, candidate: &[f64]) -> Result<(Vec<f64>, bool)> {
        check_joint(self.gp, candidate, "candidate")?;
        let sigma = match self.targets.sigma_tilde(self.gp, candidate) {
            Ok(s) => s,
            Err(Error::DegenerateCandidate) => return Ok((vec![0.0; self.weights.len()], true)),
            Err(e) => return Err(e),
        };
        let means = self.targets.means();
        let terms = (0..self.weights.len())
            .map(|i| {
                let r = i * self.slice_len..(i + 1) * self.slice_len;
                expected_max_gain(&means[r.clone()], &sigma[r])
            })
            .collect();
        Ok((terms, false))
    }

    pub fn revi(&self, candidate: &[f64]) -> Result<f64> {
        let (terms, _) = self.kg_terms(candidate)?;
        Ok(terms.iter().zip(&self.weights).map(|(k, w)| k * w).sum())
    }
}

/// `KGⁿ_{x_u}(candidate)`: expected gain in the maximum of the posterior mean
/// over the slice `{(x_u_fixed, x_l) : x_l ∈ disc}` from one observation at
/// `candidate`.
pub fn kg_fixed_task(
    gp: &GpModel,
    x_u_fixed: &[f64],
    candidate: &[f64],
    disc: &SliceDiscretization,
) -> Result<KgOutcome> {
    let interest = InterestSet::uniform(vec![x_u_fixed.to_vec()])?;
    let eval = ReviEvaluator::new(gp, &interest, disc)?;
    let (terms, degenerate) = eval.kg_terms(candidate)?;
    Ok(KgOutcome {
        value: terms[0],
        degenerate,
    })
}

/// Weighted sum of fixed-task knowledge gradients over the interest set.
pub fn revi(gp: &GpModel, candidate: &[f64], interest: &InterestSet, disc: &SliceDiscretization) -> Result<f64> {
    ReviEvaluator::new(gp, interest, disc)?.revi(candidate)
}

/// Search settings for [`maximize_revi_with`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviSearch {
    /// Size of the Sobol sweep over the joint box.
    pub candidates: usize,
    /// Lower-level Sobol points paired with every interest point.
    pub augment_lower: usize,
    /// Pattern-search evaluations spent refining the best candidate.
    pub refine_evals: usize,
    pub refine_step: f64,
}

impl Default for ReviSearch {
    fn default() -> Self {
        Self {
            candidates: 512,
            augment_lower: 8,
            refine_evals: 50,
            refine_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviChoice {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Maximizes REVI with the default search using `budget` sweep candidates.
pub fn maximize_revi(
    gp: &GpModel,
    interest: &InterestSet,
    disc: &SliceDiscretization,
    budget: usize,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let search = ReviSearch {
        candidates: budget,
        ..Default::default()
    };
    Ok(maximize_revi_with(gp, interest, disc, &search, stream, Execution::default())?.point)
}

/// Sobol sweep of the joint box, augmented with interest-point slices, then
/// pattern-search refinement of the best candidate.
pub fn maximize_revi_with(
    gp: &GpModel,
    interest: &InterestSet,
    disc: &SliceDiscretization,
    search: &ReviSearch,
    stream: &mut RngStream,
    exec: Execution,
) -> Result<ReviChoice> {
    if search.candidates == 0 {
        return Err(Error::Config("REVI candidate budget must be at least 1".into()));
    }
    let d = gp.dim();
    let d_l = disc.dim();
    let eval = ReviEvaluator::new(gp, interest, disc)?;

    let mut candidates = sobol_points(d, search.candidates, stream);
    if search.augment_lower > 0 {
        let lower = sobol_points(d_l, search.augment_lower, stream);
        let (upper, _) = interest.merged();
        for x_u in &upper {
            for x_l in &lower {
                candidates.push(joint(x_u, x_l));
            }
        }
    }

    let values: Vec<f64> = exec
        .map(&candidates, |c| eval.revi(c))
        .into_iter()
        .collect::<Result<_>>()?;
    let best = argmax(&values);
    let mut choice = ReviChoice {
        point: candidates[best].clone(),
        value: values[best],
    };

    if search.refine_evals > 0 {
        let opts = PatternSearchOptions {
            initial_step: search.refine_step,
            min_step: 1e-9,
            max_evals: search.refine_evals,
        };
        let lo = vec![0.0; d];
        let hi = vec![1.0; d];
        let mut failure = None;
        let m = pattern_search(
            |x| match eval.revi(x) {
                Ok(v) => -v,
                Err(e) => {
                    failure = Some(e);
                    f64::INFINITY
                }
            },
            &choice.point,
            -choice.value,
            &lo,
            &hi,
            &opts,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if -m.value > choice.value {
            choice = ReviChoice {
                point: m.x,
                value: -m.value,
            };
        }
    }
    Ok(choice)
}

/// REVITS: argmax of one joint posterior draw over the grid of distinct
/// interest points crossed with the lower discretization.
pub fn revits_select(
    gp: &GpModel,
    interest: &InterestSet,
    lower_disc: &SliceDiscretization,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    // duplicate rows would carry identical sample values
    let (upper, _) = interest.merged();
    let grid: Vec<Vec<f64>> = upper
        .iter()
        .flat_map(|x_u| lower_disc.points().iter().map(move |x_l| joint(x_u, x_l)))
        .collect();
    for p in &grid {
        check_joint(gp, p, "grid point")?;
    }
    let (i, _) = thompson_argmax(gp, &grid, stream)?;
    Ok(grid[i].clone())
}
