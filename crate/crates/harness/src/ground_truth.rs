//! On-disk cache of brute-force ground truths, keyed by problem and
//! resolution.

use std::fs;
use std::path::{Path, PathBuf};

use bilbao_core::testbed::{true_bilevel_optimum_with, BilevelProblem, GroundTruth};
use bilbao_core::Execution;
use log::info;

use crate::config::GroundTruthSettings;
use crate::error::Result;

/// Whether a ground truth came from the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    /// Nothing usable was cached (missing file, other resolution, or an
    /// unreadable file); the value was computed and written.
    Computed,
}

pub fn cache_path(dir: &Path, problem: &str) -> PathBuf {
    dir.join(format!("ground_truth_{problem}.json"))
}

fn read_cached(path: &Path, problem: &str, settings: GroundTruthSettings) -> Option<GroundTruth> {
    let text = fs::read_to_string(path).ok()?;
    let truth: GroundTruth = match serde_json::from_str(&text) {
        Ok(t) => t,
        Err(e) => {
            info!("ignoring unreadable ground-truth cache {}: {e}", path.display());
            return None;
        }
    };
    if truth.problem != problem
        || truth.resolution != settings.resolution
        || truth.lower_resolution != settings.lower_resolution
    {
        info!(
            "ground-truth cache {} has resolution {}/{}, need {}/{}; recomputing",
            path.display(),
            truth.resolution,
            truth.lower_resolution,
            settings.resolution,
            settings.lower_resolution
        );
        return None;
    }
    Some(truth)
}

/// Loads the ground truth from `dir`, or computes and stores it.
pub fn load_or_compute(
    problem: &BilevelProblem,
    settings: GroundTruthSettings,
    dir: &Path,
    exec: Execution,
) -> Result<(GroundTruth, CacheStatus)> {
    let path = cache_path(dir, problem.name());
    if let Some(truth) = read_cached(&path, problem.name(), settings) {
        info!("ground-truth cache hit: {}", path.display());
        return Ok((truth, CacheStatus::Hit));
    }
    info!(
        "computing ground truth for {} at resolution {}/{}",
        problem.name(),
        settings.resolution,
        settings.lower_resolution
    );
    let truth = true_bilevel_optimum_with(problem, settings.resolution, settings.lower_resolution, exec);
    fs::create_dir_all(dir)?;
    fs::write(&path, serde_json::to_string_pretty(&truth)?)?;
    Ok((truth, CacheStatus::Computed))
}
