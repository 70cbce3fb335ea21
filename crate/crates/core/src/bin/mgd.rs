use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mgd::experiment::{dump_features_from_run, run_experiment, Arm, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mgd", version, about = "Channel-matching distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every arm for every seed and write the run directory.
    Run {
        config: PathBuf,
        /// Comma-separated arms, e.g. `baseline,amp,no-matching`.
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<String>>,
        /// Use seeds 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate the config and print it; write nothing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Render matched teacher, reduced and student channels from a finished run.
    DumpFeatures {
        run_dir: PathBuf,
        #[arg(long, default_value = "amp")]
        arm: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value_t = 1)]
        tap: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(
    path: &Path,
    arms: Option<Vec<String>>,
    seeds: Option<u64>,
    out: Option<PathBuf>,
) -> mgd::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(arms) = arms {
        config.arms = arms.iter().map(|a| a.parse()).collect::<mgd::Result<Vec<Arm>>>()?;
    }
    if let Some(n) = seeds {
        config.seeds = (0..n).collect();
    }
    if let Some(out) = out {
        config.out_dir = out;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, arms, seeds, out, dry_run } => {
            let config = match resolve(&config, arms, seeds, out) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            if dry_run {
                println!("{}", config.to_json());
                return ExitCode::SUCCESS;
            }
            match run_experiment(&config) {
                Ok(report) => {
                    println!("{:<12} {:>5} {:>8} {:>8}", "arm", "seeds", "mean", "std");
                    for row in &report.summary {
                        println!("{:<12} {:>5} {:>8.4} {:>8.4}", row.arm.name(), row.seeds, row.mean_acc, row.std_acc);
                    }
                    println!("wrote {}", config.out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::DumpFeatures { run_dir, arm, seed, sample, tap, out } => {
            let result = arm.parse().and_then(|arm| dump_features_from_run(&run_dir, arm, seed, sample, tap, &out));
            match result {
                Ok(files) => {
                    println!("wrote {} images to {}", files.len(), out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("dump failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
