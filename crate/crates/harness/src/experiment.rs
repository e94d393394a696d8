//! Seeded replications, metric series, and the files an experiment leaves
//! behind.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use bilbao_core::algorithms::{run_benchmark_named, run_bilbao_with, NoObserver, Trace};
use bilbao_core::metrics::{
    optimality_gap_series, probe_set, ActionGapObserver, MetricSeries, ACTION_GAP, ACTION_GAP_AT_OPTIMUM,
    ACTION_GAP_PROBES, OPTIMALITY_GAP,
};
use bilbao_core::sampling::RngStream;
use bilbao_core::testbed::{make_problem, GroundTruth, GroundTruthOracle, ProblemKind};
use bilbao_core::Execution;
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::config::{AlgorithmName, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::ground_truth::{load_or_compute, CacheStatus};

pub const METRICS_FILE: &str = "metrics.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// Metric names in output order.
pub const METRIC_ORDER: [&str; 3] = [OPTIMALITY_GAP, ACTION_GAP, ACTION_GAP_AT_OPTIMUM];

/// Output of one successful replication.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub series: Vec<MetricSeries>,
}

impl RunOutput {
    pub fn metric(&self, name: &str) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.metric == name)
    }
}

/// One replication of one algorithm.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: AlgorithmName,
    pub replication: usize,
    /// The run's output, or why it failed.
    pub outcome: std::result::Result<RunOutput, String>,
    /// Seconds spent on the run and its metrics.
    pub wall_time: f64,
}

/// Long-format metric row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub problem: String,
    pub algorithm: String,
    pub replication: usize,
    pub evaluation_index: usize,
    pub metric_name: String,
    pub value: f64,
}

/// Cross-replication summary at one evaluation index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub problem: String,
    pub algorithm: String,
    pub evaluation_index: usize,
    pub metric_name: String,
    pub mean: f64,
    /// Standard error of the mean, `std / sqrt(count)`.
    pub std_err: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TraceRow {
    problem: String,
    algorithm: String,
    replication: usize,
    evaluation_index: usize,
    level: String,
    phase: String,
    point: String,
    value: f64,
    recommendation: String,
}

/// Everything an experiment produced, before or after it is written out.
#[derive(Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub truth: GroundTruth,
    pub cache: CacheStatus,
    /// Ordered by algorithm (as configured), then replication.
    pub runs: Vec<RunRecord>,
}

/// Runs one replication: the algorithm on a fresh problem instance with
/// stream `(master_seed, replication)`, then its metric series.
pub fn run_replication(
    cfg: &ExperimentConfig,
    algorithm: AlgorithmName,
    replication: usize,
    truth: &GroundTruth,
    oracle: &GroundTruthOracle<'_>,
    probes: &[Vec<f64>],
    exec: Execution,
) -> bilbao_core::Result<RunOutput> {
    let problem = make_problem(&cfg.problem)?;
    let mut stream = RngStream::new(cfg.master_seed, replication as u64);
    let (trace, mut action) = match algorithm {
        AlgorithmName::BilbaoRevi | AlgorithmName::BilbaoTs => {
            let bilbao = cfg.bilbao_for(algorithm);
            if cfg.metrics.action_gap {
                let mut observer = ActionGapObserver::new(oracle, truth, probes, bilbao.phi_restarts, replication, exec)
                    .with_stride(cfg.metrics.action_gap_stride);
                let trace = run_bilbao_with(&problem, &bilbao, &mut stream, exec, &mut observer)?;
                (trace, vec![observer.full, observer.at_optimum])
            } else {
                (run_bilbao_with(&problem, &bilbao, &mut stream, exec, &mut NoObserver)?, Vec::new())
            }
        }
        AlgorithmName::Benchmark => (run_benchmark_named(&problem, &cfg.benchmark, &mut stream, algorithm.as_str())?, Vec::new()),
        AlgorithmName::Benchmark2 => {
            (run_benchmark_named(&problem, &cfg.benchmark2, &mut stream, algorithm.as_str())?, Vec::new())
        }
    };
    debug_assert_eq!(trace.total_evaluations(), problem.total_evaluations());
    let mut series = vec![optimality_gap_series(&trace, oracle, truth, replication)?];
    series.append(&mut action);
    Ok(RunOutput { trace, series })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs every configured replication without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    execute_with(cfg, Execution::default())
}

pub fn execute_with(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentReport> {
    let kind = ProblemKind::from_name(&cfg.problem).map_err(|e| HarnessError::Config(e.to_string()))?;
    let reference = make_problem(kind.name())?;
    let (truth, cache) = load_or_compute(&reference, cfg.ground_truth, &cfg.cache_dir, exec)?;
    let oracle = GroundTruthOracle::new(&reference, cfg.ground_truth.lower_resolution);
    let probes = probe_set(reference.d_u(), cfg.master_seed);

    let jobs: Vec<(AlgorithmName, usize)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| (0..cfg.replications).map(move |r| (a, r)))
        .collect();
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(jobs.len()));
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(algorithm, replication)) = jobs.get(i) else {
            break;
        };
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            run_replication(cfg, algorithm, replication, &truth, &oracle, &probes, exec)
        }));
        let outcome = match outcome {
            Ok(Ok(out)) => Ok(out),
            Ok(Err(e)) => Err(e.to_string()),
            Err(payload) => Err(panic_message(payload)),
        };
        let wall_time = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(_) => info!("{algorithm} replication {replication} finished in {wall_time:.1}s"),
            Err(e) => warn!("{algorithm} replication {replication} failed: {e}"),
        }
        done.lock().expect("no panics while holding the lock").push(RunRecord {
            algorithm,
            replication,
            outcome,
            wall_time,
        });
    };
    let workers = cfg.workers.min(jobs.len()).max(1);
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(&worker);
            }
        });
    }

    let mut runs = done.into_inner().expect("workers finished");
    let position = |a: AlgorithmName| cfg.algorithms.iter().position(|&b| b == a).expect("configured");
    runs.sort_by_key(|r| (position(r.algorithm), r.replication));
    Ok(ExperimentReport {
        config: cfg.clone(),
        truth,
        cache,
        runs,
    })
}

fn format_point(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

impl ExperimentReport {
    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Successful outputs of one algorithm, by replication.
    pub fn outputs(&self, algorithm: AlgorithmName) -> Vec<&RunOutput> {
        self.runs
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect()
    }

    /// Mean over successful replications of each series' latest value at or
    /// before `evaluation`; `None` if some replication has no such value.
    pub fn mean_at(&self, algorithm: AlgorithmName, metric: &str, evaluation: usize) -> Option<f64> {
        let values: Option<Vec<f64>> = self
            .outputs(algorithm)
            .iter()
            .map(|o| o.metric(metric).and_then(|s| s.value_at(evaluation)))
            .collect();
        let values = values?;
        if values.is_empty() {
            return None;
        }
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Mean over successful replications of each series' last value.
    pub fn mean_final(&self, algorithm: AlgorithmName, metric: &str) -> Option<f64> {
        self.mean_at(algorithm, metric, usize::MAX)
    }

    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for run in &self.runs {
            let Ok(out) = &run.outcome else { continue };
            for series in &out.series {
                for (&e, &v) in series.evaluation_indices.iter().zip(&series.values) {
                    rows.push(MetricRow {
                        problem: self.config.problem.clone(),
                        algorithm: run.algorithm.to_string(),
                        replication: run.replication,
                        evaluation_index: e,
                        metric_name: series.metric.clone(),
                        value: v,
                    });
                }
            }
        }
        rows
    }

    /// Mean and standard error per (algorithm, metric, evaluation index)
    /// over the replications that have a row there. Failed replications are
    /// left out.
    pub fn aggregate_rows(&self) -> Vec<AggregateRow> {
        let alg_pos = |a: &str| self.config.algorithms.iter().position(|b| b.as_str() == a).unwrap_or(usize::MAX);
        let metric_pos = |m: &str| METRIC_ORDER.iter().position(|n| *n == m).unwrap_or(usize::MAX);
        let mut groups: BTreeMap<(usize, usize, usize), (String, String, Vec<f64>)> = BTreeMap::new();
        for row in self.metric_rows() {
            let key = (alg_pos(&row.algorithm), metric_pos(&row.metric_name), row.evaluation_index);
            groups
                .entry(key)
                .or_insert_with(|| (row.algorithm.clone(), row.metric_name.clone(), Vec::new()))
                .2
                .push(row.value);
        }
        groups
            .into_iter()
            .map(|((_, _, e), (algorithm, metric_name, values))| {
                let n = values.len();
                let mean = values.iter().sum::<f64>() / n as f64;
                let std_err = if n > 1 {
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
                AggregateRow {
                    problem: self.config.problem.clone(),
                    algorithm,
                    evaluation_index: e,
                    metric_name,
                    mean,
                    std_err,
                    count: n,
                }
            })
            .collect()
    }

    fn trace_rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        for run in &self.runs {
            let Ok(out) = &run.outcome else { continue };
            for r in &out.trace.records {
                rows.push(TraceRow {
                    problem: self.config.problem.clone(),
                    algorithm: run.algorithm.to_string(),
                    replication: run.replication,
                    evaluation_index: r.evaluations,
                    level: format!("{:?}", r.level).to_lowercase(),
                    phase: format!("{:?}", r.phase).to_lowercase(),
                    point: format_point(&r.point),
                    value: r.value,
                    recommendation: r.recommendation.as_deref().map(format_point).unwrap_or_default(),
                });
            }
        }
        rows
    }

    fn metadata(&self) -> serde_json::Value {
        let kind = ProblemKind::from_name(&self.config.problem).expect("validated");
        let runs: Vec<serde_json::Value> = self
            .runs
            .iter()
            .map(|r| match &r.outcome {
                Ok(out) => json!({
                    "algorithm": r.algorithm,
                    "replication": r.replication,
                    "status": "ok",
                    "evaluations": out.trace.total_evaluations(),
                    "wall_time_s": r.wall_time,
                }),
                Err(e) => json!({
                    "algorithm": r.algorithm,
                    "replication": r.replication,
                    "status": "failed",
                    "error": e,
                    "wall_time_s": r.wall_time,
                }),
            })
            .collect();
        let failed: BTreeMap<String, usize> = self
            .config
            .algorithms
            .iter()
            .map(|a| {
                let n = self.runs.iter().filter(|r| r.algorithm == *a && r.outcome.is_err()).count();
                (a.to_string(), n)
            })
            .collect();
        json!({
            "code_version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "problem_description": kind.description(),
            "ground_truth": self.truth,
            "ground_truth_cache": match self.cache {
                CacheStatus::Hit => "hit",
                CacheStatus::Computed => "computed",
            },
            "budgets": self.config.algorithms.iter().map(|a| (a.to_string(), self.config.budget(*a))).collect::<BTreeMap<_, _>>(),
            "cadence": {
                OPTIMALITY_GAP: "after every upper-level evaluation of the loop, at the initial recommendation, and at the final evaluation",
                ACTION_GAP: format!("after the first lower GP fit, every {}-th refit after it, and the last refit; BILBAO only", self.config.metrics.action_gap_stride),
                ACTION_GAP_AT_OPTIMUM: "same cadence as action_gap",
            },
            "action_gap_probes": ACTION_GAP_PROBES,
            "replication_streams": "(master_seed, replication)",
            "failed_replications": failed,
            "runs": runs,
        })
    }

    /// Writes the long and aggregate metric CSVs, the traces, and the
    /// metadata into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(METRICS_FILE))?;
        for row in self.metric_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(AGGREGATE_FILE))?;
        for row in self.aggregate_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(TRACES_FILE))?;
        for row in self.trace_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        fs::write(dir.join(METADATA_FILE), serde_json::to_string_pretty(&self.metadata())?)?;
        Ok(())
    }
}

/// Runs the experiment and writes its outputs to the configured directory.
/// Failed replications are listed in the metadata and counted by
/// [`ExperimentReport::failed`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = execute(cfg)?;
    report.write(&cfg.output_dir)?;
    info!("wrote results to {}", cfg.output_dir.display());
    Ok(report)
}
