//! Experiment runner: seeded replications of BILBAO and the nested benchmark
//! on registered problems, with gap metrics written as CSV.
//!
//! Output files, all under the configured output directory:
//!
//! - `metrics.csv`: `problem, algorithm, replication, evaluation_index,
//!   metric_name, value`, one row per recorded metric value.
//! - `aggregate.csv`: `problem, algorithm, evaluation_index, metric_name,
//!   mean, std_err, count` across replications.
//! - `traces.csv`: every objective evaluation with its query point and the
//!   recommendation after it.
//! - `metadata.json`: resolved config, ground truth, cadence, per-run status
//!   and wall time.

pub mod config;
pub mod error;
pub mod experiment;
pub mod ground_truth;

pub use config::{AlgorithmName, ExperimentConfig, ExperimentFile};
pub use error::{HarnessError, Result};
pub use experiment::{execute, run_experiment, ExperimentReport};
