//! End-to-end drivers: BILBAO with REVI or REVITS at the lower level, and
//! the nested EI benchmark that solves a fresh lower problem per upper point.

use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::acquisition::{expected_improvement, maximize_revi_with, revits_select, ReviSearch, SliceDiscretization};
use crate::error::{Error, Result};
use crate::gp::{Dataset, FitOptions, GpModel, Hyperparameters, KernelFamily};
use crate::optim::{pattern_search, PatternSearchOptions};
use crate::par::Execution;
use crate::response_map::{build_map_with, estimate_phi, recommend, sample_interest_set, ResponseMap, RestrictedPathSampler};
use crate::sampling::{argmax, sobol_points, RngStream};
use crate::testbed::BilevelProblem;

/// Lower-level acquisition used by BILBAO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerAcquisition {
    Revi,
    Revits,
}

/// Settings for one BILBAO run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BilbaoConfig {
    /// Sobol initialization size of each of the two GPs.
    pub init_budget_per_gp: usize,
    /// Upper-level iterations `N`.
    pub upper_iters: usize,
    /// Lower-level queries; one per upper iteration while `n < lower_iters`.
    pub lower_iters: usize,
    /// Thompson draws forming the interest set `X_TS`.
    pub k_interest: usize,
    /// Size of the lower discretization `X_LMC`.
    pub lower_disc_size: usize,
    /// Base Sobol size of the upper discretization `X_D`.
    pub upper_grid_size: usize,
    pub phi_restarts: usize,
    pub acquisition: LowerAcquisition,
    pub revi_candidate_budget: usize,
    pub kernel: KernelFamily,
    /// Hyperparameter starts for the first fit of each GP.
    pub fit_restarts: usize,
    /// Hyperparameter starts for later refits; the previous optimum is
    /// always one of them.
    pub refit_restarts: usize,
}

impl Default for BilbaoConfig {
    fn default() -> Self {
        Self::two_dimensional(LowerAcquisition::Revi)
    }
}

impl BilbaoConfig {
    /// Budgets for problems with one upper and one lower variable:
    /// 10 initial points per GP and 80 iterations (180 evaluations).
    pub fn two_dimensional(acquisition: LowerAcquisition) -> Self {
        Self {
            init_budget_per_gp: 10,
            upper_iters: 80,
            lower_iters: 80,
            k_interest: 10,
            lower_disc_size: 150,
            upper_grid_size: 128,
            phi_restarts: 30,
            acquisition,
            revi_candidate_budget: 512,
            kernel: KernelFamily::default(),
            fit_restarts: 8,
            refit_restarts: 2,
        }
    }

    /// Budgets for problems with two upper and two lower variables:
    /// 20 initial points per GP and 100 iterations (240 evaluations).
    pub fn four_dimensional(acquisition: LowerAcquisition) -> Self {
        Self {
            init_budget_per_gp: 20,
            upper_iters: 100,
            lower_iters: 100,
            lower_disc_size: 250,
            upper_grid_size: 256,
            ..Self::two_dimensional(acquisition)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("init_budget_per_gp", self.init_budget_per_gp),
            ("upper_iters", self.upper_iters),
            ("lower_iters", self.lower_iters),
            ("k_interest", self.k_interest),
            ("lower_disc_size", self.lower_disc_size),
            ("upper_grid_size", self.upper_grid_size),
            ("phi_restarts", self.phi_restarts),
            ("revi_candidate_budget", self.revi_candidate_budget),
            ("fit_restarts", self.fit_restarts),
            ("refit_restarts", self.refit_restarts),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.lower_iters > self.upper_iters {
            return Err(Error::Config(format!(
                "lower_iters ({}) cannot exceed upper_iters ({})",
                self.lower_iters, self.upper_iters
            )));
        }
        Ok(())
    }

    /// Objective evaluations one run consumes.
    pub fn total_evaluations(&self) -> usize {
        2 * self.init_budget_per_gp + self.upper_iters + self.lower_iters
    }
}

/// Settings for one run of the nested benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    /// Upper initialization size `I_u`.
    pub upper_init: usize,
    /// Lower initialization size `I_l` of every inner run.
    pub lower_init: usize,
    /// Upper EI iterations `N`.
    pub upper_iters: usize,
    /// Lower EI iterations `M` of every inner run.
    pub lower_iters: usize,
    pub kernel: KernelFamily,
    pub fit_restarts: usize,
    /// Sobol sweep size when maximizing EI.
    pub ei_candidates: usize,
    /// Pattern-search evaluations refining the best EI candidate.
    pub ei_refine_evals: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self::new(3, 3, 20, 4)
    }
}

impl BenchmarkConfig {
    pub fn new(upper_init: usize, lower_init: usize, upper_iters: usize, lower_iters: usize) -> Self {
        Self {
            upper_init,
            lower_init,
            upper_iters,
            lower_iters,
            kernel: KernelFamily::default(),
            fit_restarts: 8,
            ei_candidates: 512,
            ei_refine_evals: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.upper_init == 0 || self.lower_init == 0 {
            return Err(Error::Config("benchmark initialization budgets must be at least 1".into()));
        }
        if self.fit_restarts == 0 || self.ei_candidates == 0 {
            return Err(Error::Config("fit_restarts and ei_candidates must be at least 1".into()));
        }
        Ok(())
    }

    /// `(I_u + N)(I_l + M + 1)`.
    pub fn total_evaluations(&self) -> usize {
        (self.upper_init + self.upper_iters) * (self.lower_init + self.lower_iters + 1)
    }
}

/// Which objective a trace record queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalLevel {
    Upper,
    Lower,
}

/// Whether a record belongs to initialization or to the acquisition loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Iteration,
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub level: EvalLevel,
    pub phase: Phase,
    /// Joint query point `(x_u, x_l)`.
    pub point: Vec<f64>,
    pub value: f64,
    /// Cumulative objective evaluations including this one.
    pub evaluations: usize,
    /// Upper-level recommendation given everything observed so far.
    pub recommendation: Option<Vec<f64>>,
    /// Seconds since the run started.
    pub wall_time: f64,
}

/// Full record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub algorithm: String,
    pub records: Vec<TraceRecord>,
    pub final_recommendation: Vec<f64>,
}

impl Trace {
    pub fn total_evaluations(&self) -> usize {
        self.records.last().map_or(0, |r| r.evaluations)
    }

    pub fn count(&self, level: EvalLevel) -> usize {
        self.records.iter().filter(|r| r.level == level).count()
    }

    /// Same trace with every timing field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Trace {
        let mut t = self.clone();
        t.records.iter_mut().for_each(|r| r.wall_time = 0.0);
        t
    }

    /// `(evaluations, recommendation)` at every upper-level record that
    /// carries a recommendation, followed by the final record if it is not
    /// already included.
    pub fn recommendation_checkpoints(&self) -> Vec<(usize, Vec<f64>)> {
        let mut out: Vec<(usize, Vec<f64>)> = self
            .records
            .iter()
            .filter(|r| r.level == EvalLevel::Upper)
            .filter_map(|r| r.recommendation.clone().map(|x| (r.evaluations, x)))
            .collect();
        if let Some(last) = self.records.last() {
            if out.last().is_none_or(|(e, _)| *e != last.evaluations) {
                out.push((last.evaluations, self.final_recommendation.clone()));
            }
        }
        out
    }
}

/// Hooks into a run's model updates.
pub trait RunObserver {
    /// Called after every refit of BILBAO's lower GP, including the first.
    fn lower_model_updated(&mut self, _evaluations: usize, _gp_l: &GpModel) -> Result<()> {
        Ok(())
    }

    /// Called once when the run ends, with the final lower GP.
    fn run_finished(&mut self, _evaluations: usize, _gp_l: &GpModel) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoObserver;

impl RunObserver for NoObserver {}

struct Recorder {
    start: Instant,
    records: Vec<TraceRecord>,
}

impl Recorder {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            records: Vec::new(),
        }
    }

    fn evaluations(&self) -> usize {
        self.records.len()
    }

    fn push(&mut self, level: EvalLevel, phase: Phase, point: Vec<f64>, value: f64, recommendation: Option<Vec<f64>>) {
        let evaluations = self.records.len() + 1;
        self.records.push(TraceRecord {
            level,
            phase,
            point,
            value,
            evaluations,
            recommendation,
            wall_time: self.start.elapsed().as_secs_f64(),
        });
    }
}

fn check_value(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{what} objective returned a non-finite value")))
    }
}

fn joint(x_u: &[f64], x_l: &[f64]) -> Vec<f64> {
    [x_u, x_l].concat()
}

fn refit(
    data: &Dataset,
    family: KernelFamily,
    restarts: usize,
    warm: Option<&Hyperparameters>,
    stream: &mut RngStream,
) -> Result<GpModel> {
    let opts = FitOptions {
        restarts,
        ..Default::default()
    };
    GpModel::fit_with(data, family, stream.next_u64(), &opts, warm)
}

/// Upper discretization: a fresh Sobol base plus every past recommendation.
fn upper_grid(d_u: usize, size: usize, history: &[Vec<f64>], stream: &mut RngStream) -> Vec<Vec<f64>> {
    let mut grid = sobol_points(d_u, size, stream);
    for rec in history {
        if !grid.contains(rec) {
            grid.push(rec.clone());
        }
    }
    grid
}

fn remember(history: &mut Vec<Vec<f64>>, rec: &[f64]) {
    if !history.iter().any(|h| h == rec) {
        history.push(rec.to_vec());
    }
}

/// BILBAO with default parallelism and no observer.
pub fn run_bilbao(problem: &BilevelProblem, cfg: &BilbaoConfig, stream: &mut RngStream) -> Result<Trace> {
    run_bilbao_with(problem, cfg, stream, Execution::default(), &mut NoObserver)
}

/// BILBAO: joint-space GPs at both levels, Thompson-sampled upper queries on
/// the restricted path `(x_u, Φ(x_u))`, and REVI or REVITS lower queries.
pub fn run_bilbao_with(
    problem: &BilevelProblem,
    cfg: &BilbaoConfig,
    stream: &mut RngStream,
    exec: Execution,
    observer: &mut dyn RunObserver,
) -> Result<Trace> {
    cfg.validate()?;
    let (d_u, d_l) = (problem.d_u(), problem.d_l());
    let d = d_u + d_l;
    let mut rec = Recorder::new();

    // lower initialization over the joint box
    let mut lower_data = Dataset::empty(d)?;
    for x in sobol_points(d, cfg.init_budget_per_gp, stream) {
        let y = check_value(problem.eval_lower(&x[..d_u], &x[d_u..]), "lower")?;
        rec.push(EvalLevel::Lower, Phase::Init, x.clone(), y, None);
        lower_data.push(x, y)?;
    }
    let mut gp_l = refit(&lower_data, cfg.kernel, cfg.fit_restarts, None, stream)?;
    observer.lower_model_updated(rec.evaluations(), &gp_l)?;

    // upper initialization paired with the initial response estimate
    let mut upper_data = Dataset::empty(d)?;
    for x_u in sobol_points(d_u, cfg.init_budget_per_gp, stream) {
        let x_l = estimate_phi(&gp_l, &x_u, cfg.phi_restarts)?;
        let y = check_value(problem.eval_upper(&x_u, &x_l), "upper")?;
        let x = joint(&x_u, &x_l);
        rec.push(EvalLevel::Upper, Phase::Init, x.clone(), y, None);
        upper_data.push(x, y)?;
    }
    let mut gp_u = refit(&upper_data, cfg.kernel, cfg.fit_restarts, None, stream)?;

    let mut history: Vec<Vec<f64>> = Vec::new();
    let grid = upper_grid(d_u, cfg.upper_grid_size, &history, stream);
    let mut map: ResponseMap = build_map_with(&gp_l, &grid, cfg.phi_restarts, exec)?;
    let mut current = recommend(&gp_u, &map)?;
    remember(&mut history, &current);

    let search = ReviSearch {
        candidates: cfg.revi_candidate_budget,
        ..Default::default()
    };

    for n in 0..cfg.upper_iters {
        // upper step: maximizer of one restricted sample path
        let idx = RestrictedPathSampler::new(&gp_u, &map)?.draw_index(stream);
        let x_u = map.upper_grid()[idx].clone();
        let x_l = map.responses()[idx].clone();
        let y_u = check_value(problem.eval_upper(&x_u, &x_l), "upper")?;
        let x = joint(&x_u, &x_l);
        upper_data.push(x.clone(), y_u)?;
        gp_u = refit(&upper_data, cfg.kernel, cfg.refit_restarts, Some(gp_u.hyperparameters()), stream)?;
        current = recommend(&gp_u, &map)?;
        remember(&mut history, &current);
        rec.push(EvalLevel::Upper, Phase::Iteration, x, y_u, Some(current.clone()));

        if n >= cfg.lower_iters {
            continue;
        }

        // lower step: query weighted towards likely upper decisions
        let interest = sample_interest_set(&gp_u, &map, cfg.k_interest, stream)?;
        let disc = SliceDiscretization::new(sobol_points(d_l, cfg.lower_disc_size, stream))?;
        let x = match cfg.acquisition {
            LowerAcquisition::Revi => maximize_revi_with(&gp_l, &interest, &disc, &search, stream, exec)?.point,
            LowerAcquisition::Revits => revits_select(&gp_l, &interest, &disc, stream)?,
        };
        let y_l = check_value(problem.eval_lower(&x[..d_u], &x[d_u..]), "lower")?;
        lower_data.push(x.clone(), y_l)?;
        gp_l = refit(&lower_data, cfg.kernel, cfg.refit_restarts, Some(gp_l.hyperparameters()), stream)?;
        observer.lower_model_updated(rec.evaluations() + 1, &gp_l)?;

        let grid = upper_grid(d_u, cfg.upper_grid_size, &history, stream);
        map = build_map_with(&gp_l, &grid, cfg.phi_restarts, exec)?;
        current = recommend(&gp_u, &map)?;
        remember(&mut history, &current);
        rec.push(EvalLevel::Lower, Phase::Iteration, x, y_l, Some(current.clone()));
    }
    observer.run_finished(rec.evaluations(), &gp_l)?;

    Ok(Trace {
        algorithm: match cfg.acquisition {
            LowerAcquisition::Revi => "bilbao_revi".into(),
            LowerAcquisition::Revits => "bilbao_ts".into(),
        },
        records: rec.records,
        final_recommendation: current,
    })
}

/// EI maximizer over the unit box: Sobol sweep, then pattern search.
fn maximize_ei(gp: &GpModel, incumbent: f64, cfg: &BenchmarkConfig, stream: &mut RngStream) -> Result<Vec<f64>> {
    let d = gp.dim();
    let ei = |x: &[f64]| -> Result<f64> {
        let (m, v) = gp.posterior(x)?;
        Ok(expected_improvement(m, v.sqrt(), incumbent))
    };
    let candidates = sobol_points(d, cfg.ei_candidates, stream);
    let values: Vec<f64> = candidates.iter().map(|c| ei(c)).collect::<Result<_>>()?;
    let best = argmax(&values);
    if cfg.ei_refine_evals == 0 {
        return Ok(candidates[best].clone());
    }
    let opts = PatternSearchOptions {
        initial_step: 0.1,
        min_step: 1e-9,
        max_evals: cfg.ei_refine_evals,
    };
    let m = pattern_search(
        |x| ei(x).map_or(f64::INFINITY, |v| -v),
        &candidates[best],
        -values[best],
        &vec![0.0; d],
        &vec![1.0; d],
        &opts,
    );
    Ok(if -m.value > values[best] { m.x } else { candidates[best].clone() })
}

/// One inner BO run at fixed `x_u`; returns the best observed lower point.
fn solve_lower(
    problem: &BilevelProblem,
    x_u: &[f64],
    cfg: &BenchmarkConfig,
    rec: &mut Recorder,
    last_rec: &Option<Vec<f64>>,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let d_l = problem.d_l();
    let mut data = Dataset::empty(d_l)?;
    for x_l in sobol_points(d_l, cfg.lower_init, stream) {
        let y = check_value(problem.eval_lower(x_u, &x_l), "lower")?;
        rec.push(EvalLevel::Lower, Phase::Init, joint(x_u, &x_l), y, last_rec.clone());
        data.push(x_l, y)?;
    }
    let mut warm: Option<Hyperparameters> = None;
    for _ in 0..cfg.lower_iters {
        let gp = refit(&data, cfg.kernel, cfg.fit_restarts, warm.as_ref(), stream)?;
        let incumbent = data.values()[data.argmax().expect("nonempty")];
        let x_l = maximize_ei(&gp, incumbent, cfg, stream)?;
        let y = check_value(problem.eval_lower(x_u, &x_l), "lower")?;
        rec.push(EvalLevel::Lower, Phase::Iteration, joint(x_u, &x_l), y, last_rec.clone());
        data.push(x_l, y)?;
        warm = Some(gp.hyperparameters().clone());
    }
    let best = data.argmax().expect("nonempty");
    Ok(data.points()[best].clone())
}

/// Nested benchmark with default settings.
pub fn run_benchmark(problem: &BilevelProblem, cfg: &BenchmarkConfig, stream: &mut RngStream) -> Result<Trace> {
    run_benchmark_named(problem, cfg, stream, "benchmark")
}

/// Nested benchmark: every upper point is resolved by a fresh lower EI run
/// and the upper level is optimized by EI on one GP over `x_u`. The
/// recommendation is the best observed upper pair.
pub fn run_benchmark_named(
    problem: &BilevelProblem,
    cfg: &BenchmarkConfig,
    stream: &mut RngStream,
    name: &str,
) -> Result<Trace> {
    cfg.validate()?;
    let d_u = problem.d_u();
    let mut rec = Recorder::new();
    let mut upper = Dataset::empty(d_u)?;
    let mut current: Option<Vec<f64>> = None;
    let mut warm: Option<Hyperparameters> = None;

    let init = sobol_points(d_u, cfg.upper_init, stream);
    for n in 0..cfg.upper_init + cfg.upper_iters {
        let (x_u, phase) = if n < cfg.upper_init {
            (init[n].clone(), Phase::Init)
        } else {
            let gp = refit(&upper, cfg.kernel, cfg.fit_restarts, warm.as_ref(), stream)?;
            let incumbent = upper.values()[upper.argmax().expect("nonempty")];
            let x_u = maximize_ei(&gp, incumbent, cfg, stream)?;
            warm = Some(gp.hyperparameters().clone());
            (x_u, Phase::Iteration)
        };
        let x_l = solve_lower(problem, &x_u, cfg, &mut rec, &current, stream)?;
        let y = check_value(problem.eval_upper(&x_u, &x_l), "upper")?;
        upper.push(x_u.clone(), y)?;
        let best = upper.argmax().expect("nonempty");
        current = Some(upper.points()[best].clone());
        rec.push(EvalLevel::Upper, phase, joint(&x_u, &x_l), y, current.clone());
    }

    Ok(Trace {
        algorithm: name.to_string(),
        records: rec.records,
        final_recommendation: current.expect("at least one upper evaluation"),
    })
}
