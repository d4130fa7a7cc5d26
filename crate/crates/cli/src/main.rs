//! `rdac` command-line entry point.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdac::data::{build_split_mnist, fetch_mnist, load_mnist_dir, save_tasks, AugmentParams, DatasetMeta, SplitConfig};
use rdac::harness::{
    analyze, emit_report, load_records, run_experiment, sweep_grid, GridSpec, HarnessError, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "rdac",
    version,
    about = "Readout range/null-space analysis of continual learning in linear networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset preparation.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
    /// Run one experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a parameter grid; exits with status 5 if any point failed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Print summary statistics for the records under a directory.
    Analyze {
        #[arg(long)]
        runs: PathBuf,
    },
    /// Write CSV, JSON and SVG reports for the records under a directory.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Build the augmented split-MNIST task cache from IDX files.
    Prepare {
        #[arg(long)]
        mnist_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Augmentation seed; runs must use the same `seeds.data`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cap on training samples per task.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long)]
        no_augment: bool,
    },
    /// Download the MNIST IDX files from a mirror.
    Fetch {
        #[arg(long)]
        base_url: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Data { command } => match command {
            DataCommand::Prepare {
                mnist_dir,
                out,
                seed,
                subsample,
                no_augment,
            } => {
                let split = SplitConfig {
                    augment: (!no_augment).then(|| AugmentParams {
                        seed,
                        ..Default::default()
                    }),
                    subsample,
                    ..Default::default()
                };
                let tasks = build_split_mnist(load_mnist_dir(&mnist_dir)?, &split)?;
                let meta = DatasetMeta {
                    data_seed: seed,
                    augmented: !no_augment,
                    subsample,
                };
                save_tasks(&tasks, &meta, &out)?;
                for t in &tasks {
                    println!(
                        "task {}: classes {:?}, {} train, {} val",
                        t.task_id,
                        t.class_ids,
                        t.train.len(),
                        t.val.len()
                    );
                }
                println!("wrote {}", out.display());
            }
            DataCommand::Fetch { base_url, out } => {
                let manifest = fetch_mnist(&base_url, &out)?;
                print_json(&serde_json::to_value(manifest).expect("manifest serializes"));
            }
        },
        Command::Run { config } => {
            let cfg = RunConfig::from_json(&read_text(&config)?)?;
            let record = run_experiment(&cfg)?;
            print_json(&serde_json::json!({
                "stability": record.stability,
                "plasticity": record.plasticity,
                "capacity": record.capacity,
                "task1_logit_drift": record.task1_logit_drift,
                "d_range_mean": record.displacement.d_range.mean,
                "d_null_mean": record.displacement.d_null.mean,
                "case": record.case,
                "status": record.status,
            }));
        }
        Command::Sweep { config, grid, workers } => {
            let cfg = RunConfig::from_json(&read_text(&config)?)?;
            let grid = GridSpec::from_json(&read_text(&grid)?)?;
            let table = sweep_grid(&cfg, &grid, workers)?;
            let failed = table.failed();
            println!("{} points, {failed} failed", table.rows.len());
            for row in table.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("{:?}: {}", row.point, row.error.as_deref().unwrap_or_default());
            }
            if failed > 0 {
                return Err(HarnessError::Partial {
                    failed,
                    total: table.rows.len(),
                });
            }
        }
        Command::Analyze { runs } => print_json(&analyze(&load_records(&runs)?)),
        Command::Report { runs, out } => {
            for p in emit_report(&load_records(&runs)?, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
