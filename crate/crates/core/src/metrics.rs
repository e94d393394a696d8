//! Gap metrics against brute-force ground truth. Nothing here touches the
//! problem's evaluation counters.

use serde::{Deserialize, Serialize};

use crate::algorithms::{RunObserver, Trace};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::par::Execution;
use crate::response_map::estimate_phi;
use crate::sampling::RngStream;
use crate::testbed::{BilevelProblem, GroundTruth, GroundTruthOracle};

pub const OPTIMALITY_GAP: &str = "optimality_gap";
pub const ACTION_GAP: &str = "action_gap";
pub const ACTION_GAP_AT_OPTIMUM: &str = "action_gap_at_optimum";

/// Size of the probe set for the full-domain action gap.
pub const ACTION_GAP_PROBES: usize = 300;

/// Stream id reserved for drawing the probe set, distinct from every
/// replication stream.
pub const PROBE_STREAM_ID: u64 = u64::MAX;

/// One metric over the course of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric: String,
    pub problem: String,
    pub replication: usize,
    pub evaluation_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn new(metric: impl Into<String>, problem: impl Into<String>, replication: usize) -> Self {
        Self {
            metric: metric.into(),
            problem: problem.into(),
            replication,
            evaluation_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a point; indices must increase strictly and values must be
    /// nonnegative.
    pub fn push(&mut self, evaluation: usize, value: f64) -> Result<()> {
        if self.evaluation_indices.last().is_some_and(|&last| evaluation <= last) {
            return Err(Error::Data(format!(
                "{}: evaluation index {evaluation} does not increase",
                self.metric
            )));
        }
        if !(value >= 0.0) {
            return Err(Error::Data(format!("{}: value {value} is not a nonnegative number", self.metric)));
        }
        self.evaluation_indices.push(evaluation);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of the latest point at or before `evaluation`.
    pub fn value_at(&self, evaluation: usize) -> Option<f64> {
        let n = self.evaluation_indices.partition_point(|&e| e <= evaluation);
        n.checked_sub(1).map(|i| self.values[i])
    }

    pub fn last(&self) -> Option<(usize, f64)> {
        self.evaluation_indices.last().map(|&e| (e, *self.values.last().expect("aligned")))
    }

    pub fn first(&self) -> Option<(usize, f64)> {
        self.evaluation_indices.first().map(|&e| (e, self.values[0]))
    }
}

/// `|F(x_rec, Φ*(x_rec)) − F(x_u*, Φ*(x_u*))|`.
pub fn optimality_gap(oracle: &GroundTruthOracle<'_>, truth: &GroundTruth, x_u_rec: &[f64]) -> f64 {
    (oracle.bilevel_value(x_u_rec) - truth.f_star).abs()
}

/// `Σ_{x_u ∈ X_e} |f(x_u, Φ(x_u)) − f(x_u, Φ*(x_u))|` for estimated
/// responses `phi_estimate` aligned with `x_e`.
pub fn action_gap_full(oracle: &GroundTruthOracle<'_>, x_e: &[Vec<f64>], phi_estimate: &[Vec<f64>]) -> Result<f64> {
    if x_e.len() != phi_estimate.len() {
        return Err(Error::Data(format!(
            "{} probe points but {} response estimates",
            x_e.len(),
            phi_estimate.len()
        )));
    }
    let problem = oracle.problem();
    Ok(x_e
        .iter()
        .zip(phi_estimate)
        .map(|(x_u, x_l)| {
            let (_, best) = oracle.phi_star_with_value(x_u);
            (problem.lower_value(x_u, x_l) - best).abs()
        })
        .sum())
}

/// `|F(x_u*, Φ*(x_u*)) − F(x_u*, Φ(x_u*))|` for an estimated response at the
/// true optimum.
pub fn action_gap_at_optimum(problem: &BilevelProblem, truth: &GroundTruth, phi_at_optimum: &[f64]) -> f64 {
    (truth.f_star - problem.upper_value(&truth.x_u_star, phi_at_optimum)).abs()
}

/// The shared probe set `X_e`: uniform upper points drawn from a stream
/// reserved for this purpose, so it depends only on the master seed.
pub fn probe_set(d_u: usize, master_seed: u64) -> Vec<Vec<f64>> {
    let mut stream = RngStream::new(master_seed, PROBE_STREAM_ID);
    (0..ACTION_GAP_PROBES).map(|_| (0..d_u).map(|_| stream.uniform()).collect()).collect()
}

/// Optimality gap at every recommendation checkpoint of a trace.
pub fn optimality_gap_series(
    trace: &Trace,
    oracle: &GroundTruthOracle<'_>,
    truth: &GroundTruth,
    replication: usize,
) -> Result<MetricSeries> {
    let mut series = MetricSeries::new(OPTIMALITY_GAP, oracle.problem().name(), replication);
    for (evals, x_u) in trace.recommendation_checkpoints() {
        series.push(evals, optimality_gap(oracle, truth, &x_u))?;
    }
    Ok(series)
}

/// Observer that records both action gaps after lower-model updates: the
/// first update, every `stride`-th one after it, and the last one.
pub struct ActionGapObserver<'a> {
    oracle: &'a GroundTruthOracle<'a>,
    truth: &'a GroundTruth,
    probes: &'a [Vec<f64>],
    restarts: usize,
    exec: Execution,
    stride: usize,
    updates: usize,
    pending: Option<usize>,
    pub full: MetricSeries,
    pub at_optimum: MetricSeries,
}

impl<'a> ActionGapObserver<'a> {
    pub fn new(
        oracle: &'a GroundTruthOracle<'a>,
        truth: &'a GroundTruth,
        probes: &'a [Vec<f64>],
        restarts: usize,
        replication: usize,
        exec: Execution,
    ) -> Self {
        let name = oracle.problem().name().to_string();
        Self {
            oracle,
            truth,
            probes,
            restarts,
            exec,
            stride: 1,
            updates: 0,
            pending: None,
            full: MetricSeries::new(ACTION_GAP, name.clone(), replication),
            at_optimum: MetricSeries::new(ACTION_GAP_AT_OPTIMUM, name, replication),
        }
    }

    /// Records only every `stride`-th update (plus the first and the last).
    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    fn record(&mut self, evaluations: usize, gp_l: &GpModel) -> Result<()> {
        let estimates: Vec<Vec<f64>> = self
            .exec
            .map(self.probes, |x_u| estimate_phi(gp_l, x_u, self.restarts))
            .into_iter()
            .collect::<Result<_>>()?;
        self.full.push(evaluations, action_gap_full(self.oracle, self.probes, &estimates)?)?;
        let at_opt = estimate_phi(gp_l, &self.truth.x_u_star, self.restarts)?;
        self.at_optimum.push(
            evaluations,
            action_gap_at_optimum(self.oracle.problem(), self.truth, &at_opt),
        )?;
        Ok(())
    }
}

impl RunObserver for ActionGapObserver<'_> {
    fn lower_model_updated(&mut self, evaluations: usize, gp_l: &GpModel) -> Result<()> {
        let due = self.updates % self.stride == 0;
        self.updates += 1;
        if due {
            self.pending = None;
            self.record(evaluations, gp_l)
        } else {
            self.pending = Some(evaluations);
            Ok(())
        }
    }

    fn run_finished(&mut self, _evaluations: usize, gp_l: &GpModel) -> Result<()> {
        // the final model is the one from the last update
        match self.pending.take() {
            Some(at) => self.record(at, gp_l),
            None => Ok(()),
        }
    }
}
