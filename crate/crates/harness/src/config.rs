//! Experiment configuration: the JSON file format and its resolution into
//! fully specified algorithm settings.

use std::fmt;
use std::path::{Path, PathBuf};

use bilbao_core::algorithms::{BenchmarkConfig, BilbaoConfig, LowerAcquisition};
use bilbao_core::testbed::{default_lower_resolution, default_upper_resolution, ProblemKind};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{HarnessError, Result};

/// Algorithms the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    BilbaoRevi,
    BilbaoTs,
    Benchmark,
    Benchmark2,
}

impl AlgorithmName {
    pub const ALL: [AlgorithmName; 4] = [Self::BilbaoRevi, Self::BilbaoTs, Self::Benchmark, Self::Benchmark2];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BilbaoRevi => "bilbao_revi",
            Self::BilbaoTs => "bilbao_ts",
            Self::Benchmark => "benchmark",
            Self::Benchmark2 => "benchmark2",
        }
    }

    pub fn is_bilbao(self) -> bool {
        matches!(self, Self::BilbaoRevi | Self::BilbaoTs)
    }
}

impl fmt::Display for AlgorithmName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Resolution of the brute-force ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSettings {
    /// Grid points per upper dimension.
    pub resolution: usize,
    /// Grid points per lower dimension.
    pub lower_resolution: usize,
}

/// Which metrics to compute and how often.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    /// Compute both action gaps for BILBAO runs.
    pub action_gap: bool,
    /// Record the action gaps after every `stride`-th lower update (the
    /// first and last updates are always recorded).
    pub action_gap_stride: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            action_gap: true,
            action_gap_stride: 1,
        }
    }
}

/// The experiment file as written by users. Every field but `problem` is
/// optional; algorithm sections override individual keys of the preset that
/// matches the problem's dimension.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub problem: String,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmName>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub bilbao: Map<String, Value>,
    #[serde(default)]
    pub benchmark: Map<String, Value>,
    #[serde(default)]
    pub benchmark2: Map<String, Value>,
    #[serde(default)]
    pub ground_truth: Option<GroundTruthSettings>,
    #[serde(default)]
    pub metrics: MetricSettings,
}

fn default_algorithms() -> Vec<AlgorithmName> {
    AlgorithmName::ALL.to_vec()
}

fn default_replications() -> usize {
    10
}

fn default_workers() -> usize {
    1
}

/// A fully specified experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: String,
    pub algorithms: Vec<AlgorithmName>,
    pub replications: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    /// Settings for `bilbao_revi`; `bilbao_ts` uses the same with REVITS.
    pub bilbao: BilbaoConfig,
    pub benchmark: BenchmarkConfig,
    pub benchmark2: BenchmarkConfig,
    pub ground_truth: GroundTruthSettings,
    pub metrics: MetricSettings,
}

/// Preset budgets: the 2D settings when the problem has one upper
/// and one lower variable, the 4D settings otherwise.
pub fn presets(kind: ProblemKind) -> (BilbaoConfig, BenchmarkConfig, BenchmarkConfig) {
    let (d_u, d_l) = kind.dims();
    if d_u + d_l <= 2 {
        (
            BilbaoConfig::two_dimensional(LowerAcquisition::Revi),
            BenchmarkConfig::new(3, 3, 20, 4),
            BenchmarkConfig::new(3, 3, 27, 2),
        )
    } else {
        (
            BilbaoConfig::four_dimensional(LowerAcquisition::Revi),
            BenchmarkConfig::new(5, 5, 10, 10),
            BenchmarkConfig::new(5, 5, 17, 5),
        )
    }
}

fn overlay<T: Serialize + for<'de> Deserialize<'de>>(base: &T, overrides: &Map<String, Value>, section: &str) -> Result<T> {
    let mut value = serde_json::to_value(base).expect("presets serialize");
    let fields = value.as_object_mut().expect("presets are objects");
    for (key, v) in overrides {
        if !fields.contains_key(key) {
            return Err(HarnessError::Config(format!("unknown key `{key}` in `{section}`")));
        }
        fields.insert(key.clone(), v.clone());
    }
    serde_json::from_value(value).map_err(|e| HarnessError::Config(format!("invalid `{section}` section: {e}")))
}

impl ExperimentFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills in presets and validates every budget.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let kind = ProblemKind::from_name(&self.problem).map_err(|e| HarnessError::Config(e.to_string()))?;
        let (bilbao, benchmark, benchmark2) = presets(kind);
        let mut bilbao: BilbaoConfig = overlay(&bilbao, &self.bilbao, "bilbao")?;
        bilbao.acquisition = LowerAcquisition::Revi;
        let benchmark: BenchmarkConfig = overlay(&benchmark, &self.benchmark, "benchmark")?;
        let benchmark2: BenchmarkConfig = overlay(&benchmark2, &self.benchmark2, "benchmark2")?;

        let config_err = |e: bilbao_core::Error| HarnessError::Config(e.to_string());
        bilbao.validate().map_err(config_err)?;
        benchmark.validate().map_err(config_err)?;
        benchmark2.validate().map_err(config_err)?;

        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(HarnessError::Config("no algorithms selected".into()));
        }
        let mut algorithms = self.algorithms.clone();
        algorithms.sort();
        algorithms.dedup();
        if algorithms.len() != self.algorithms.len() {
            return Err(HarnessError::Config("algorithms are listed more than once".into()));
        }
        if self.metrics.action_gap_stride == 0 {
            return Err(HarnessError::Config("action_gap_stride must be at least 1".into()));
        }

        let (d_u, d_l) = kind.dims();
        let ground_truth = self.ground_truth.unwrap_or(GroundTruthSettings {
            resolution: default_upper_resolution(d_u),
            lower_resolution: default_lower_resolution(d_l),
        });
        if ground_truth.resolution < 2 || ground_truth.lower_resolution < 2 {
            return Err(HarnessError::Config("ground-truth resolutions must be at least 2".into()));
        }

        let output_dir = self.output_dir.clone().unwrap_or_else(|| PathBuf::from("results").join(kind.name()));
        let cache_dir = self.cache_dir.clone().unwrap_or_else(|| output_dir.clone());
        Ok(ExperimentConfig {
            problem: kind.name().to_string(),
            algorithms: self.algorithms.clone(),
            replications: self.replications,
            master_seed: self.master_seed,
            workers: self.workers,
            output_dir,
            cache_dir,
            bilbao,
            benchmark,
            benchmark2,
            ground_truth,
            metrics: self.metrics,
        })
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        ExperimentFile::load(path)?.resolve()
    }

    /// BILBAO settings for one of the two BILBAO variants.
    pub fn bilbao_for(&self, algorithm: AlgorithmName) -> BilbaoConfig {
        let mut cfg = self.bilbao.clone();
        cfg.acquisition = match algorithm {
            AlgorithmName::BilbaoTs => LowerAcquisition::Revits,
            _ => LowerAcquisition::Revi,
        };
        cfg
    }

    /// Objective evaluations one replication of `algorithm` consumes.
    pub fn budget(&self, algorithm: AlgorithmName) -> usize {
        match algorithm {
            AlgorithmName::BilbaoRevi | AlgorithmName::BilbaoTs => self.bilbao.total_evaluations(),
            AlgorithmName::Benchmark => self.benchmark.total_evaluations(),
            AlgorithmName::Benchmark2 => self.benchmark2.total_evaluations(),
        }
    }
}
