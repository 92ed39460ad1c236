use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oed_greedy::cli::{run_experiment, verify_guarantees, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "oed-greedy",
    about = "Batch greedy and MM heuristics for mutual-information experimental design",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores); results are identical for
    /// any value.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch-size sweep and write runs.csv / summary.json.
    Sweep(CommonArgs),
    /// Re-verify the approximation guarantees on seeded random instances
    /// and write verify_report.json.
    Verify(CommonArgs),
}

fn load(args: &CommonArgs) -> Result<(ExperimentConfig, PathBuf), String> {
    let mut cfg = ExperimentConfig::from_file(&args.config).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| "no output directory: pass --out or set output_dir".to_string())?;
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    Ok((cfg, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Sweep(args) => match load(&args).and_then(|(cfg, out)| {
            run_experiment(&cfg, &out)
                .map_err(|e| e.to_string())
                .map(|r| (r, out))
        }) {
            Ok((result, out)) => {
                println!(
                    "sweep: {} rows -> {}",
                    result.rows.len(),
                    out.join("runs.csv").display()
                );
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
        Command::Verify(args) => match load(&args).and_then(|(cfg, out)| {
            verify_guarantees(&cfg, &out)
                .map_err(|e| e.to_string())
                .map(|r| (r, out))
        }) {
            Ok((report, out)) => {
                for check in &report.checks {
                    println!(
                        "{}: {} (trials {}, max violation {:.3e}, tolerance {:.1e})",
                        check.name,
                        if check.pass { "pass" } else { "FAIL" },
                        check.trials,
                        check.max_violation,
                        check.tolerance
                    );
                }
                println!(
                    "verify: {} -> {}",
                    if report.pass { "pass" } else { "FAIL" },
                    out.join("verify_report.json").display()
                );
                if report.pass {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
    }
}
