//! Synthetic bilevel test problems on the unit box, with brute-force ground
//! truth for the lower-level best response and the bilevel optimum.
//!
//! Every problem is exposed in unit coordinates: `x_u ∈ [0,1]^{d_u}`,
//! `x_l ∈ [0,1]^{d_l}`. Each objective carries its own affine map onto its
//! native box, and objectives that are natively minimized are negated so that
//! both levels maximize.

use std::collections::HashMap;
use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{pattern_search, PatternSearchOptions};
use crate::par::Execution;
use crate::sampling::argmax;

/// Objective over a joint native vector `(x_u, x_l)`.
pub type NativeFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Closure of an open SMD `tan` interval: the symmetric box on which `tan`
/// reaches `±reach`, the largest magnitude any best response needs.
fn tan_box(reach: f64) -> (f64, f64) {
    (-reach.atan(), reach.atan())
}

/// One level's objective together with its native box.
#[derive(Clone)]
pub struct Level {
    native: NativeFn,
    bounds: Vec<(f64, f64)>,
    minimize: bool,
}

impl Level {
    pub fn new(native: NativeFn, bounds: Vec<(f64, f64)>, minimize: bool) -> Self {
        Self { native, bounds, minimize }
    }

    /// Identity box, maximized as given.
    pub fn unit(f: NativeFn, d: usize) -> Self {
        Self::new(f, vec![(0.0, 1.0); d], false)
    }

    pub fn to_native(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter().zip(&self.bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
    }

    pub fn to_unit(&self, native: &[f64]) -> Vec<f64> {
        native.iter().zip(&self.bounds).map(|(x, (lo, hi))| (x - lo) / (hi - lo)).collect()
    }

    /// Value on the native scale and sign convention.
    pub fn native_value(&self, native: &[f64]) -> f64 {
        (self.native)(native)
    }

    /// Value at a unit-box point, negated for minimization problems.
    pub fn value(&self, unit: &[f64]) -> f64 {
        let v = (self.native)(&self.to_native(unit));
        if self.minimize {
            -v
        } else {
            v
        }
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
}

/// A box-constrained bilevel problem: maximize `F(x_u, Φ*(x_u))` where
/// `Φ*(x_u) = argmax_{x_l} f(x_u, x_l)`.
pub struct BilevelProblem {
    name: String,
    d_u: usize,
    d_l: usize,
    upper: Level,
    lower: Level,
    upper_calls: AtomicUsize,
    lower_calls: AtomicUsize,
}

impl fmt::Debug for BilevelProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BilevelProblem")
            .field("name", &self.name)
            .field("d_u", &self.d_u)
            .field("d_l", &self.d_l)
            .field("evaluations", &self.evaluations())
            .finish()
    }
}

impl BilevelProblem {
    pub fn new(name: impl Into<String>, d_u: usize, d_l: usize, upper: Level, lower: Level) -> Result<Self> {
        if d_u == 0 || d_l == 0 {
            return Err(Error::Config("both levels need at least one dimension".into()));
        }
        if upper.bounds.len() != d_u + d_l || lower.bounds.len() != d_u + d_l {
            return Err(Error::Config("objective boxes must span the joint space".into()));
        }
        Ok(Self {
            name: name.into(),
            d_u,
            d_l,
            upper,
            lower,
            upper_calls: AtomicUsize::new(0),
            lower_calls: AtomicUsize::new(0),
        })
    }

    /// A problem defined directly on the unit box, both levels maximized.
    pub fn from_unit_fns<F, G>(name: impl Into<String>, d_u: usize, d_l: usize, upper: F, lower: G) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        let up: NativeFn = Arc::new(move |x: &[f64]| upper(&x[..d_u], &x[d_u..]));
        let lo: NativeFn = Arc::new(move |x: &[f64]| lower(&x[..d_u], &x[d_u..]));
        Self::new(name, d_u, d_l, Level::unit(up, d_u + d_l), Level::unit(lo, d_u + d_l))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d_u(&self) -> usize {
        self.d_u
    }

    pub fn d_l(&self) -> usize {
        self.d_l
    }

    pub fn upper_level(&self) -> &Level {
        &self.upper
    }

    pub fn lower_level(&self) -> &Level {
        &self.lower
    }

    fn joint(&self, x_u: &[f64], x_l: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x_u.len(), self.d_u);
        debug_assert_eq!(x_l.len(), self.d_l);
        [x_u, x_l].concat()
    }

    /// `F(x_u, x_l)` without touching the evaluation counters.
    pub fn upper_value(&self, x_u: &[f64], x_l: &[f64]) -> f64 {
        self.upper.value(&self.joint(x_u, x_l))
    }

    /// `f(x_u, x_l)` without touching the evaluation counters.
    pub fn lower_value(&self, x_u: &[f64], x_l: &[f64]) -> f64 {
        self.lower.value(&self.joint(x_u, x_l))
    }

    /// Counted evaluation of the upper objective.
    pub fn eval_upper(&self, x_u: &[f64], x_l: &[f64]) -> f64 {
        self.upper_calls.fetch_add(1, Ordering::Relaxed);
        self.upper_value(x_u, x_l)
    }

    /// Counted evaluation of the lower objective.
    pub fn eval_lower(&self, x_u: &[f64], x_l: &[f64]) -> f64 {
        self.lower_calls.fetch_add(1, Ordering::Relaxed);
        self.lower_value(x_u, x_l)
    }

    /// `(upper, lower)` counted evaluations so far.
    pub fn evaluations(&self) -> (usize, usize) {
        (
            self.upper_calls.load(Ordering::Relaxed),
            self.lower_calls.load(Ordering::Relaxed),
        )
    }

    pub fn total_evaluations(&self) -> usize {
        let (u, l) = self.evaluations();
        u + l
    }

    /// Same objectives with zeroed counters.
    pub fn fresh(&self) -> Self {
        Self {
            name: self.name.clone(),
            d_u: self.d_u,
            d_l: self.d_l,
            upper: self.upper.clone(),
            lower: self.lower.clone(),
            upper_calls: AtomicUsize::new(0),
            lower_calls: AtomicUsize::new(0),
        }
    }
}

/// Registered problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    CamelBranin,
    DixonBranin,
    Smd1,
    Smd2,
    Smd3,
    Smd4,
    ToyQuadratic,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 7] = [
        ProblemKind::CamelBranin,
        ProblemKind::DixonBranin,
        ProblemKind::Smd1,
        ProblemKind::Smd2,
        ProblemKind::Smd3,
        ProblemKind::Smd4,
        ProblemKind::ToyQuadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::CamelBranin => "camel_branin",
            ProblemKind::DixonBranin => "dixon_branin",
            ProblemKind::Smd1 => "smd1",
            ProblemKind::Smd2 => "smd2",
            ProblemKind::Smd3 => "smd3",
            ProblemKind::Smd4 => "smd4",
            ProblemKind::ToyQuadratic => "toy_quadratic",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown problem '{name}'")))
    }

    /// `(d_u, d_l)`.
    pub fn dims(self) -> (usize, usize) {
        match self {
            ProblemKind::CamelBranin | ProblemKind::DixonBranin | ProblemKind::ToyQuadratic => (1, 1),
            _ => (2, 2),
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ProblemKind::CamelBranin => "upper: six-hump camel, lower: branin",
            ProblemKind::DixonBranin => "upper: dixon-price, lower: branin",
            ProblemKind::Smd1 => "SMD1 with p = q = r = 1",
            ProblemKind::Smd2 => "SMD2 with p = q = r = 1",
            ProblemKind::Smd3 => "SMD3 with p = q = r = 1",
            ProblemKind::Smd4 => "SMD4 with p = q = r = 1",
            ProblemKind::ToyQuadratic => "F = -(x_u-0.3)^2-(x_l-0.3)^2, f = -(x_l-x_u)^2",
        }
    }
}

pub fn six_hump_camel(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (4.0 - 2.1 * a * a + a.powi(4) / 3.0) * a * a + a * b + (-4.0 + 4.0 * b * b) * b * b
}

pub fn branin(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    let t = b - 5.1 / (4.0 * PI * PI) * a * a + 5.0 / PI * a - 6.0;
    t * t + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * a.cos() + 10.0
}

pub fn dixon_price(x: &[f64]) -> f64 {
    let first = (x[0] - 1.0).powi(2);
    first
        + x.windows(2)
            .enumerate()
            .map(|(i, w)| (i + 2) as f64 * (2.0 * w[1] * w[1] - w[0]).powi(2))
            .sum::<f64>()
}

// SMD objectives over the native joint vector (u1, u2, l1, l2), minimized.

fn smd1_upper(x: &[f64]) -> f64 {
    let (u1, u2, l1, l2) = (x[0], x[1], x[2], x[3]);
    u1 * u1 + l1 * l1 + u2 * u2 + (u2 - l2.tan()).powi(2)
}

fn smd1_lower(x: &[f64]) -> f64 {
    let (u1, u2, l1, l2) = (x[0], x[1], x[2], x[3]);
    u1 * u1 + l1 * l1 + (u2 - l2.tan()).powi(2)
}

fn smd2_upper(x: &[f64]) -> f64 {
    let (u1, u2, l1, l2) = (x[0], x[1], x[2], x[3]);
    u1 * u1 - l1 * l1 + u2 * u2 - (u2 - l2.ln()).powi(2)
}

fn smd2_lower(x: &[f64]) -> f64 {
    let (u1, u2, l1, l2) = (x[0], x[1], x[2], x[3]);
    u1 * u1 + l1 * l1 + (u2 - l2.ln()).powi(2)
}

fn rastrigin_term(l1: f64) -> f64 {
    1.0 + l1 * l1 - (2.0 * PI * l1).cos()
}

fn smd3_upper(x: &[f64]) -> f64 {
    let (u1, u2, l1, l2) = (x[0], x[1], x[2], x[3]);
    u1 * u1 + l1 * l1 + u2 * u2 + (u2 * u2 - l2.tan()).powi(2)
}

fn smd3_lower(x: &[f64]) -> f64 {
    let (u1, u2, l1, l2) = (x[0], x[1], x[2], x[3]);
    u1 * u1 + rastrigin_term(l1) + (u2 * u2 - l2.tan()).powi(2)
}

fn smd4_upper(x: &[f64]) -> f64 {
    let (u1, u2, l1, l2) = (x[0], x[1], x[2], x[3]);
    u1 * u1 - l1 * l1 + u2 * u2 - (u2.abs() - (1.0 + l2).ln()).powi(2)
}

fn smd4_lower(x: &[f64]) -> f64 {
    let (u1, u2, l1, l2) = (x[0], x[1], x[2], x[3]);
    u1 * u1 + rastrigin_term(l1) + (u2.abs() - (1.0 + l2).ln()).powi(2)
}

/// Instantiates a registered problem by name.
pub fn make_problem(name: &str) -> Result<BilevelProblem> {
    Ok(make_problem_kind(ProblemKind::from_name(name)?))
}

pub fn make_problem_kind(kind: ProblemKind) -> BilevelProblem {
    let (d_u, d_l) = kind.dims();
    let (upper, lower) = match kind {
        ProblemKind::CamelBranin => (
            Level::new(Arc::new(six_hump_camel), vec![(-3.0, 3.0), (-2.0, 2.0)], true),
            Level::new(Arc::new(branin), vec![(-5.0, 10.0), (0.0, 15.0)], true),
        ),
        ProblemKind::DixonBranin => (
            Level::new(Arc::new(dixon_price), vec![(-10.0, 10.0), (-10.0, 10.0)], true),
            Level::new(Arc::new(branin), vec![(-5.0, 10.0), (0.0, 15.0)], true),
        ),
        ProblemKind::Smd1 => {
            // best response tan(l2) = u2 with u2 in [-5, 10]
            let b = vec![(-5.0, 10.0), (-5.0, 10.0), (-5.0, 10.0), tan_box(10.0)];
            (Level::new(Arc::new(smd1_upper), b.clone(), true), Level::new(Arc::new(smd1_lower), b, true))
        }
        ProblemKind::Smd2 => {
            // best response ln(l2) = u2 with u2 in [-5, 1]
            let b = vec![(-5.0, 10.0), (-5.0, 1.0), (-5.0, 10.0), ((-5.0f64).exp(), E)];
            (Level::new(Arc::new(smd2_upper), b.clone(), true), Level::new(Arc::new(smd2_lower), b, true))
        }
        ProblemKind::Smd3 => {
            // best response tan(l2) = u2^2 with u2^2 in [0, 100]
            let b = vec![(-5.0, 10.0), (-5.0, 10.0), (-5.0, 10.0), tan_box(100.0)];
            (Level::new(Arc::new(smd3_upper), b.clone(), true), Level::new(Arc::new(smd3_lower), b, true))
        }
        ProblemKind::Smd4 => {
            let b = vec![(-5.0, 10.0), (-1.0, 1.0), (-5.0, 10.0), (0.0, E)];
            (Level::new(Arc::new(smd4_upper), b.clone(), true), Level::new(Arc::new(smd4_lower), b, true))
        }
        ProblemKind::ToyQuadratic => {
            return BilevelProblem::from_unit_fns(
                kind.name(),
                1,
                1,
                |u, l| -(u[0] - 0.3).powi(2) - (l[0] - 0.3).powi(2),
                |u, l| -(l[0] - u[0]).powi(2),
            )
            .expect("toy problem is well formed")
        }
    };
    BilevelProblem::new(kind.name(), d_u, d_l, upper, lower).expect("registered problems are well formed")
}

/// Grid points per lower dimension used by default for `Φ*`.
pub fn default_lower_resolution(d_l: usize) -> usize {
    match d_l {
        1 => 2000,
        2 => 200,
        3 => 40,
        _ => 12,
    }
}

/// Grid points per upper dimension used by default for the bilevel optimum.
pub fn default_upper_resolution(d_u: usize) -> usize {
    match d_u {
        1 => 2000,
        2 => 50,
        _ => 12,
    }
}

/// Full tensor grid with `res` points per axis, endpoints included.
fn tensor_grid(d: usize, res: usize) -> Vec<Vec<f64>> {
    let res = res.max(2);
    let step = 1.0 / (res - 1) as f64;
    let total = res.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let k = idx % res;
                    idx /= res;
                    k as f64 * step
                })
                .collect()
        })
        .collect()
}

fn refine_max<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], f0: f64, step: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let d = x0.len();
    let opts = PatternSearchOptions {
        initial_step: step,
        min_step: 1e-12,
        max_evals,
    };
    let m = pattern_search(|x| -f(x), x0, -f0, &vec![0.0; d], &vec![1.0; d], &opts);
    (m.x, -m.value)
}

/// Brute-force `Φ*(x_u)`: best point of a `resolution`-per-axis lower grid,
/// refined by pattern search. Returns the response and `f` there.
pub fn phi_star_with_value(problem: &BilevelProblem, x_u: &[f64], resolution: usize) -> (Vec<f64>, f64) {
    let grid = tensor_grid(problem.d_l(), resolution);
    let values: Vec<f64> = grid.iter().map(|x_l| problem.lower_value(x_u, x_l)).collect();
    let best = argmax(&values);
    let step = 1.0 / (resolution.max(2) - 1) as f64;
    refine_max(|x_l| problem.lower_value(x_u, x_l), &grid[best], values[best], step, 400)
}

pub fn phi_star(problem: &BilevelProblem, x_u: &[f64], resolution: usize) -> Vec<f64> {
    phi_star_with_value(problem, x_u, resolution).0
}

/// Ground-truth optimum of a bilevel problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub problem: String,
    pub x_u_star: Vec<f64>,
    /// `Φ*(x_u*)`.
    pub x_l_star: Vec<f64>,
    /// `F(x_u*, Φ*(x_u*))`.
    pub f_star: f64,
    /// Upper grid points per axis.
    pub resolution: usize,
    /// Lower grid points per axis.
    pub lower_resolution: usize,
}

/// Nested brute force: every upper grid point is resolved with [`phi_star`],
/// and the best few are refined by pattern search on `x_u ↦ F(x_u, Φ*(x_u))`.
pub fn true_bilevel_optimum(problem: &BilevelProblem, resolution: usize) -> GroundTruth {
    true_bilevel_optimum_with(problem, resolution, default_lower_resolution(problem.d_l()), Execution::default())
}

pub fn true_bilevel_optimum_with(
    problem: &BilevelProblem,
    resolution: usize,
    lower_resolution: usize,
    exec: Execution,
) -> GroundTruth {
    let resolve = |x_u: &[f64]| {
        let (x_l, _) = phi_star_with_value(problem, x_u, lower_resolution);
        problem.upper_value(x_u, &x_l)
    };
    let grid = tensor_grid(problem.d_u(), resolution);
    let values: Vec<f64> = exec.map(&grid, |x_u| resolve(x_u));

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let step = 1.0 / (resolution.max(2) - 1) as f64;
    let refined: Vec<(Vec<f64>, f64)> = exec.map(&order[..order.len().min(5)], |&i| {
        refine_max(|x_u| resolve(x_u), &grid[i], values[i], step, 300)
    });
    let scores: Vec<f64> = refined.iter().map(|r| r.1).collect();
    let (x_u_star, _) = refined[argmax(&scores)].clone();
    let (x_l_star, _) = phi_star_with_value(problem, &x_u_star, lower_resolution);
    let f_star = problem.upper_value(&x_u_star, &x_l_star);
    GroundTruth {
        problem: problem.name().to_string(),
        x_u_star,
        x_l_star,
        f_star,
        resolution,
        lower_resolution,
    }
}

/// Memoized `Φ*` for one problem at a fixed lower resolution.
pub struct GroundTruthOracle<'p> {
    problem: &'p BilevelProblem,
    lower_resolution: usize,
    cache: Mutex<HashMap<Vec<u64>, (Vec<f64>, f64)>>,
}

impl<'p> GroundTruthOracle<'p> {
    pub fn new(problem: &'p BilevelProblem, lower_resolution: usize) -> Self {
        Self {
            problem,
            lower_resolution,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn problem(&self) -> &BilevelProblem {
        self.problem
    }

    pub fn lower_resolution(&self) -> usize {
        self.lower_resolution
    }

    /// `(Φ*(x_u), f(x_u, Φ*(x_u)))`.
    pub fn phi_star_with_value(&self, x_u: &[f64]) -> (Vec<f64>, f64) {
        let key: Vec<u64> = x_u.iter().map(|v| v.to_bits()).collect();
        if let Some(hit) = self.cache.lock().expect("oracle cache poisoned").get(&key) {
            return hit.clone();
        }
        let r = phi_star_with_value(self.problem, x_u, self.lower_resolution);
        self.cache.lock().expect("oracle cache poisoned").insert(key, r.clone());
        r
    }

    pub fn phi_star(&self, x_u: &[f64]) -> Vec<f64> {
        self.phi_star_with_value(x_u).0
    }

    /// `F(x_u, Φ*(x_u))`.
    pub fn bilevel_value(&self, x_u: &[f64]) -> f64 {
        let x_l = self.phi_star(x_u);
        self.problem.upper_value(x_u, &x_l)
    }

    pub fn cached_points(&self) -> usize {
        self.cache.lock().expect("oracle cache poisoned").len()
    }
}
