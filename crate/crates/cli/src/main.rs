use clap::{Parser, Subcommand};
use milpool_cli::commands;
use milpool_cli::config::ExperimentConfig;
use milpool_cli::error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Weakly labelled event detection experiments: dataset generation,
/// pooling-function training, three-level F1 evaluation, and plot data.
#[derive(Parser)]
#[command(name = "milpool", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic weakly labelled dataset.
    Generate {
        /// Experiment config file (key=value lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the dataset files.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the dataset seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a scorer with the configured pooling function.
    Train {
        /// Directory holding features.csv, weak_labels.csv, events.csv.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for the run artifacts.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pooling kind: max, average, exponential, linear, power.
        #[arg(long)]
        pooling: Option<String>,
        /// Overrides the training seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a dataset at all three levels.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Emit per-frame threshold series and the exponent-vs-duration table.
    Plotdata {
        /// A run directory produced by `train`.
        #[arg(long)]
        run: PathBuf,
        /// The dataset directory the run was trained on.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clip: usize,
        #[arg(long = "class")]
        class_id: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also render both plots as standalone SVG files.
        #[arg(long)]
        svg: bool,
    },
    /// Train and evaluate every (pooling, seed) pair and summarize.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated pooling kinds to sweep.
        #[arg(long)]
        pooling: Option<String>,
        /// Number of seeds per pooling kind.
        #[arg(long)]
        seeds: Option<usize>,
        /// Parallel worker slots.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.data_seed = seed;
            }
            commands::cmd_generate(&config, &out)
        }
        Command::Train {
            data,
            out,
            config,
            pooling,
            seed,
        } => {
            let mut config = load_config(&config)?;
            if let Some(p) = pooling {
                config.train.pooling = p.parse()?;
            }
            if let Some(seed) = seed {
                config.train.seed = seed;
            }
            commands::cmd_train(&data, &out, &config).map(|_| ())
        }
        Command::Evaluate {
            checkpoint,
            data,
            out,
            config,
        } => {
            let config = load_config(&config)?;
            commands::cmd_evaluate(&checkpoint, &data, &out, &config)
        }
        Command::Plotdata {
            run,
            data,
            clip,
            class_id,
            out,
            svg,
        } => commands::cmd_plotdata(&run, &data, clip, class_id, &out, svg),
        Command::Sweep {
            config,
            out,
            pooling,
            seeds,
            jobs,
        } => {
            let mut config = load_config(&config)?;
            if let Some(list) = pooling {
                config.sweep.poolings = list
                    .split(',')
                    .map(|p| p.parse())
                    .collect::<Result<Vec<_>, _>>()?;
            }
            if let Some(seeds) = seeds {
                config.sweep.seeds = seeds;
            }
            if let Some(jobs) = jobs {
                config.sweep.jobs = jobs;
            }
            commands::cmd_sweep(&config, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
