use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use bilbao_core::algorithms::EvalLevel;
use bilbao_core::metrics::{ACTION_GAP, OPTIMALITY_GAP};
use bilbao_harness::config::AlgorithmName;
use bilbao_harness::experiment::{execute, AGGREGATE_FILE, METADATA_FILE, METRICS_FILE, TRACES_FILE};
use bilbao_harness::{run_experiment, ExperimentFile};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bilbao-harness-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn small_config(out: &PathBuf, replications: usize) -> ExperimentFile {
    let text = format!(
        r#"{{
            "problem": "camel_branin",
            "algorithms": ["bilbao_revi", "bilbao_ts", "benchmark2"],
            "replications": {replications},
            "master_seed": 11,
            "output_dir": {out:?},
            "cache_dir": {cache:?},
            "bilbao": {{"init_budget_per_gp": 3, "upper_iters": 2, "lower_iters": 2, "upper_grid_size": 16,
                        "lower_disc_size": 16, "phi_restarts": 4, "revi_candidate_budget": 32}},
            "benchmark2": {{"upper_init": 2, "lower_init": 2, "upper_iters": 1, "lower_iters": 1}},
            "ground_truth": {{"resolution": 200, "lower_resolution": 400}}
        }}"#,
        cache = out.parent().unwrap().join("cache"),
    );
    ExperimentFile::from_json(&text).unwrap()
}

#[test]
fn one_gap_row_per_upper_step_plus_final() {
    let dir = scratch("accounting");
    let mut file = small_config(&dir.join("out"), 1);
    file.bilbao.insert("upper_iters".into(), 1.into());
    file.bilbao.insert("lower_iters".into(), 1.into());
    let cfg = file.resolve().unwrap();
    let report = execute(&cfg).unwrap();
    assert_eq!(report.failed(), 0);
    for alg in [AlgorithmName::BilbaoRevi, AlgorithmName::BilbaoTs] {
        let out = &report.outputs(alg)[0];
        let gaps = out.metric(OPTIMALITY_GAP).unwrap();
        // init 3 + 3, then one upper and one lower step
        assert_eq!(out.trace.total_evaluations(), 8);
        assert_eq!(gaps.evaluation_indices, vec![7, 8]);
        let upper_steps: Vec<usize> = out
            .trace
            .records
            .iter()
            .filter(|r| r.level == EvalLevel::Upper && r.recommendation.is_some())
            .map(|r| r.evaluations)
            .collect();
        assert_eq!(upper_steps, vec![7]);
        // action gaps after the initial fit and after the single refit
        assert_eq!(out.metric(ACTION_GAP).unwrap().evaluation_indices, vec![3, 8]);
    }
    let bench = &report.outputs(AlgorithmName::Benchmark2)[0];
    assert_eq!(bench.trace.total_evaluations(), (2 + 1) * (2 + 1 + 1));
    assert!(bench.metric(ACTION_GAP).is_none());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn reruns_are_byte_identical_and_aggregates_are_means() {
    let dir = scratch("determinism");
    let a = small_config(&dir.join("a"), 2).resolve().unwrap();
    let b = small_config(&dir.join("b"), 2).resolve().unwrap();
    let report = run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    for file in [METRICS_FILE, AGGREGATE_FILE, TRACES_FILE] {
        let x = fs::read(a.output_dir.join(file)).unwrap();
        let y = fs::read(b.output_dir.join(file)).unwrap();
        assert!(!x.is_empty(), "{file} is empty");
        assert_eq!(x, y, "{file} differs between reruns");
    }

    // aggregate means recomputed from the long CSV
    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    let mut r = csv::Reader::from_path(a.output_dir.join(METRICS_FILE)).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["problem", "algorithm", "replication", "evaluation_index", "metric_name", "value"]
    );
    for rec in r.records() {
        let rec = rec.unwrap();
        groups
            .entry((rec[1].to_string(), rec[4].to_string(), rec[3].parse().unwrap()))
            .or_default()
            .push(rec[5].parse().unwrap());
    }
    let mut r = csv::Reader::from_path(a.output_dir.join(AGGREGATE_FILE)).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["problem", "algorithm", "evaluation_index", "metric_name", "mean", "std_err", "count"]
    );
    let mut seen = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let values = &groups[&(rec[1].to_string(), rec[3].to_string(), rec[2].parse().unwrap())];
        let mean: f64 = rec[4].parse().unwrap();
        let expect = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        assert_eq!(rec[6].parse::<usize>().unwrap(), values.len());
        seen += 1;
    }
    assert_eq!(seen, groups.len());
    assert_eq!(report.aggregate_rows().len(), groups.len());

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.output_dir.join(METADATA_FILE)).unwrap()).unwrap();
    assert_eq!(meta["runs"].as_array().unwrap().len(), 6);
    assert_eq!(meta["ground_truth"]["resolution"], 200);
    assert_eq!(meta["config"]["replications"], 2);
    assert!(meta["cadence"][OPTIMALITY_GAP].is_string());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn replications_share_probes_but_not_streams() {
    let dir = scratch("streams");
    let cfg = small_config(&dir.join("out"), 2).resolve().unwrap();
    let report = execute(&cfg).unwrap();
    let runs = report.outputs(AlgorithmName::BilbaoRevi);
    assert_eq!(runs.len(), 2);
    assert_ne!(runs[0].trace.records[0].point, runs[1].trace.records[0].point);
    let _ = fs::remove_dir_all(&dir);
}
