use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;

#[derive(Parser)]
#[command(name = "ude", version, about = "Universal debiased editing experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// TOML configuration, or a JSON run manifest to replay
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed (overrides the configuration)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the configuration)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Lambda,
    LocalIters,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the biased training set and the balanced test set
    Generate,
    /// Save the frozen encoder and train the sensitive-attribute head
    TrainSa,
    /// Learn the universal edit (white-box or zeroth-order, by config)
    LearnEdit,
    /// Train the ERM and edited disease heads
    TrainDisease,
    /// Fairness reports for the ERM and edited heads
    Evaluate,
    /// Rerun the in-memory pipeline for each value of one parameter
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Serve forward-only embeddings over TCP
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        address: String,
    },
    /// Export the normalized magnitude of a learned edit
    NoiseMap {
        /// Directory holding a learned edit (defaults to <out>/edit)
        #[arg(long)]
        edit: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        top_fraction: f32,
    },
    /// Run every stage in order
    Run {
        #[arg(long, required = true)]
        all: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate => commands::generate(&cli.common),
        Command::TrainSa => commands::train_sa(&cli.common),
        Command::LearnEdit => commands::learn_edit(&cli.common),
        Command::TrainDisease => commands::train_disease(&cli.common),
        Command::Evaluate => commands::evaluate(&cli.common),
        Command::Sweep { param, values } => commands::sweep(&cli.common, param, &values),
        Command::Serve { address } => commands::serve(&cli.common, &address),
        Command::NoiseMap { edit, top_fraction } => {
            commands::noise_map(&cli.common, edit.as_deref(), top_fraction)
        }
        Command::Run { .. } => commands::run_all(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
