use std::path::PathBuf;
use std::process::ExitCode;

use bilbao_core::testbed::{make_problem_kind, ProblemKind};
use bilbao_core::Execution;
use bilbao_harness::config::{ExperimentFile, GroundTruthSettings};
use bilbao_harness::ground_truth::{cache_path, load_or_compute};
use bilbao_harness::{run_experiment, HarnessError, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bilbao", version, about = "Bilevel Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replications described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent replications, overriding the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List registered problems.
    ListProblems {
        /// Cache directory checked for ground truths.
        #[arg(long, default_value = "ground_truth_cache")]
        cache_dir: PathBuf,
    },
    /// Compute (or load) a problem's ground truth and print it as JSON.
    GroundTruth {
        #[arg(long)]
        problem: String,
        /// Grid points per upper dimension.
        #[arg(long)]
        resolution: usize,
        /// Grid points per lower dimension; defaults by dimension.
        #[arg(long)]
        lower_resolution: Option<usize>,
        #[arg(long, default_value = "ground_truth_cache")]
        cache_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, workers } => {
            let mut file = ExperimentFile::load(&config)?;
            if let Some(out) = out {
                file.output_dir = Some(out);
            }
            if let Some(w) = workers {
                file.workers = w;
            }
            let cfg = file.resolve()?;
            let report = run_experiment(&cfg)?;
            let failed = report.failed();
            if failed > 0 {
                return Err(HarnessError::Replications {
                    failed,
                    total: report.runs.len(),
                });
            }
            Ok(())
        }
        Command::ListProblems { cache_dir } => {
            for kind in ProblemKind::ALL {
                let (d_u, d_l) = kind.dims();
                let cached = if cache_path(&cache_dir, kind.name()).exists() {
                    "cached"
                } else {
                    "not cached"
                };
                println!("{:<14} d_u={d_u} d_l={d_l}  ground truth {cached:<10}  {}", kind.name(), kind.description());
            }
            Ok(())
        }
        Command::GroundTruth {
            problem,
            resolution,
            lower_resolution,
            cache_dir,
        } => {
            let kind = ProblemKind::from_name(&problem).map_err(|e| HarnessError::Config(e.to_string()))?;
            let p = make_problem_kind(kind);
            let settings = GroundTruthSettings {
                resolution,
                lower_resolution: lower_resolution
                    .unwrap_or_else(|| bilbao_core::testbed::default_lower_resolution(p.d_l())),
            };
            if settings.resolution < 2 || settings.lower_resolution < 2 {
                return Err(HarnessError::Config("resolutions must be at least 2".into()));
            }
            let (truth, _) = load_or_compute(&p, settings, &cache_dir, Execution::default())?;
            println!("{}", serde_json::to_string_pretty(&truth)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
