use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "fishswim",
    version,
    about = "Train, evaluate and calibrate the simulated robotic fish"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration; defaults apply to missing blocks and keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a SAC policy; writes metrics.jsonl, checkpoints and evaluation
    /// snapshots.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the number of environment steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate a checkpoint, or the CPG-PID baseline when no checkpoint is
    /// given, on one task.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// position, uturn or pentagram
        #[arg(long, default_value = "position")]
        task: String,
        /// Number of episodes (defaults to the config value).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Policy and baseline on identical seeded episodes.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "pentagram")]
        task: String,
        /// Paired trials (defaults to the config value, 3).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Fit servo gains and latency to reference response CSVs.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Directory of reference CSV files.
        #[arg(long)]
        refs: PathBuf,
    },
    /// Run the baseline for a while and write the fluid field and markers.
    DumpField {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "position")]
        task: String,
        /// Control steps to simulate before the dump.
        #[arg(long, default_value_t = 50)]
        steps: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common, steps } => commands::train(&common, steps),
        Command::Eval {
            common,
            checkpoint,
            task,
            trials,
        } => commands::eval(&common, checkpoint.as_deref(), &task, trials),
        Command::Compare {
            common,
            checkpoint,
            task,
            trials,
        } => commands::compare(&common, &checkpoint, &task, trials),
        Command::Calibrate { common, refs } => commands::calibrate(&common, &refs),
        Command::DumpField { common, task, steps } => commands::dump_field(&common, &task, steps),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
