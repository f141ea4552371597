use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvarkit::experiment::{self, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "cvarkit", version, about = "CVaR gradient estimation and optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the final evaluations of two training runs (JSON on stdout).
    Compare { run_a: PathBuf, run_b: PathBuf },
    /// Parse and check a config without running it.
    ValidateConfig { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = experiment::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Run { config, out_dir, seed } => {
            experiment::run(&config, &RunOptions { output_dir: out_dir, seed }).map(|outcome| {
                print!("{}", outcome.report);
                println!("artifacts in {}", outcome.dir.display());
                outcome.passed()
            })
        }
        Command::Compare { run_a, run_b } => experiment::compare(&run_a, &run_b).and_then(|c| {
            println!("{}", serde_json::to_string_pretty(&c)?);
            Ok(true)
        }),
        Command::ValidateConfig { config } => ExperimentConfig::load(&config).map(|c| {
            println!("ok: {} experiment, {} seed(s)", c.experiment.name(), c.seeds.len());
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
