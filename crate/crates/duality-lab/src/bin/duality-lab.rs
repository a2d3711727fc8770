//! Experiment CLI: run configuration files, list the experiment registry,
//! plot results, and run the acceptance suite.
//!
//! Exit codes: 0 success, 1 configuration error, 2 invariant or
//! acceptance failure.

use clap::{Parser, Subcommand};
use duality_lab::accept;
use duality_lab::error::Error;
use duality_lab::exp::{self, plot::PlotKind, ExperimentConfig};
use duality_lab::mc::with_workers;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "duality-lab", version, about = "stochastic duality experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config file.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (also via DUALITY_LAB_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List registered experiments and their parameter schemas.
    List,
    /// Render an SVG plot from a results directory.
    Plot {
        result: PathBuf,
        #[arg(long)]
        kind: String,
    },
    /// Run the acceptance suite and print one line per criterion.
    Accept {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn worker_count(cli_threads: Option<usize>) -> usize {
    cli_threads
        .or_else(|| {
            std::env::var("DUALITY_LAB_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Invariant(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            threads,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            let mut cfg = match ExperimentConfig::from_toml_str(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let workers = worker_count(threads);
            match with_workers(workers, || exp::run_config(&cfg)) {
                Ok(result) => {
                    println!(
                        "{}  hash={}  wall={}ms  -> {}",
                        result.experiment,
                        result.config_hash,
                        result.wall_ms,
                        result.output_dir.display()
                    );
                    for row in &result.rows {
                        println!(
                            "  {:<28} {:>14.8}  (se {:.3e}, n={})",
                            row.name, row.value, row.stderr, row.n_samples
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::List => {
            print!("{}", exp::describe_registry());
            ExitCode::SUCCESS
        }
        Command::Plot { result, kind } => {
            let kind = match PlotKind::from_str(&kind) {
                Ok(k) => k,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let dir = if result.is_dir() {
                result
            } else {
                result.parent().map(PathBuf::from).unwrap_or(result)
            };
            match exp::plot::plot_results(&dir, kind) {
                Ok(path) => {
                    println!("wrote {}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::Accept { seed, threads } => {
            // the suite manages its own pools (1 vs 8 workers) for the
            // determinism criterion; --threads only caps the main pass
            let _ = threads;
            let results = accept::run_acceptance(seed.unwrap_or(accept::DEFAULT_SEED));
            let mut all_pass = true;
            for r in &results {
                println!("{}", r.line());
                all_pass &= r.passed;
            }
            println!(
                "{}/{} criteria passed",
                results.iter().filter(|r| r.passed).count(),
                results.len()
            );
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
    }
}
