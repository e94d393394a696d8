//! Runs one BILBAO replication and prints the optimality gap at each
//! recommendation checkpoint.
//!
//! `cargo run --release -p bilbao-core --example single_run -- camel_branin revi 0`

use std::time::Instant;

use bilbao_core::algorithms::{run_bilbao, BilbaoConfig, LowerAcquisition};
use bilbao_core::metrics::optimality_gap_series;
use bilbao_core::sampling::RngStream;
use bilbao_core::testbed::{default_lower_resolution, default_upper_resolution, make_problem, true_bilevel_optimum, GroundTruthOracle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("camel_branin", String::as_str);
    let acquisition = match args.get(1).map(String::as_str) {
        Some("ts") => LowerAcquisition::Revits,
        _ => LowerAcquisition::Revi,
    };
    let seed: u64 = args.get(2).map_or(Ok(0), |s| s.parse())?;

    let problem = make_problem(name)?;
    let cfg = if problem.d_u() + problem.d_l() <= 2 {
        BilbaoConfig::two_dimensional(acquisition)
    } else {
        BilbaoConfig::four_dimensional(acquisition)
    };

    let t = Instant::now();
    let truth = true_bilevel_optimum(&problem, default_upper_resolution(problem.d_u()));
    println!("ground truth {:?} in {:.1}s", truth, t.elapsed().as_secs_f64());

    let t = Instant::now();
    let trace = run_bilbao(&problem, &cfg, &mut RngStream::new(seed, 0))?;
    println!("run finished in {:.1}s", t.elapsed().as_secs_f64());

    let oracle = GroundTruthOracle::new(&problem, default_lower_resolution(problem.d_l()));
    let gaps = optimality_gap_series(&trace, &oracle, &truth, 0)?;
    for (e, v) in gaps.evaluation_indices.iter().zip(&gaps.values) {
        println!("{e:4} {v:.6}");
    }
    Ok(())
}
