//! `gphlvm`: train, evaluate and explore GPLVMs with hyperbolic latent spaces.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 numerical
//! failure, 4 I/O error. Errors print a single `error[<class>]: <message>` line
//! to stderr.

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{Endpoint, GenData};
use config::default_out_dir;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gphlvm", version, about, long_about = None)]
#[command(after_help = "Output directories default to $GPHLVM_OUT_DIR, then the current directory.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model from a TOML run configuration.
    Train {
        /// Run configuration (graph, dataset, model path and [train] hyperparameters).
        config: PathBuf,
        /// Directory for the training history (overrides the config's out_dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write stress reports, the pairwise error matrix and its heatmap.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Training dataset (delimited text with a `class` column).
        #[arg(long)]
        dataset: PathBuf,
        /// Taxonomy graph document.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Embed new observations through a back-constrained model.
    Embed {
        #[arg(long)]
        model: PathBuf,
        /// New observations in the dataset format.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Output file (default: embedding.csv in the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a geodesic between two latent points.
    Interpolate {
        #[arg(long)]
        model: PathBuf,
        /// Start: a training point index or comma-separated spatial coordinates.
        #[arg(long, allow_hyphen_values = true)]
        from: Endpoint,
        /// End: a training point index or comma-separated spatial coordinates.
        #[arg(long, allow_hyphen_values = true)]
        to: Endpoint,
        /// Number of trajectory points.
        #[arg(long, default_value_t = gphlvm::evalmotion::DEFAULT_STEPS)]
        steps: usize,
        /// Timestep between trajectory points, in seconds.
        #[arg(long, default_value_t = gphlvm::evalmotion::DEFAULT_DT)]
        dt: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Retrain over a grid of regularization scales and tabulate final losses.
    GammaSweep {
        config: PathBuf,
        /// Comma-separated regularization scales.
        #[arg(long, value_delimiter = ',', default_value = "0,10,100,1000,10000")]
        gammas: Vec<f64>,
        /// Comma-separated training seeds (default: the config's seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a synthetic taxonomy tree with observations and a run config.
    GenData {
        /// Levels below the root.
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Children per internal node.
        #[arg(long, default_value_t = 2)]
        branching: usize,
        /// Observations per node.
        #[arg(long, default_value_t = 2)]
        points: usize,
        /// Observation dimension.
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Standard deviation of the observation noise.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let dir = |flag: Option<PathBuf>| flag.unwrap_or_else(default_out_dir);
    match cli.command {
        Command::Train { config, out_dir } => commands::cmd_train(&config, out_dir.as_deref()),
        Command::Eval { model, dataset, graph, out_dir } => commands::cmd_eval(&model, &dataset, &graph, &dir(out_dir)),
        Command::Embed { model, data, graph, out } => {
            let out = out.unwrap_or_else(|| default_out_dir().join("embedding.csv"));
            commands::cmd_embed(&model, &data, &graph, &out)
        }
        Command::Interpolate { model, from, to, steps, dt, out_dir } => {
            commands::cmd_interpolate(&model, &from, &to, steps, dt, &dir(out_dir))
        }
        Command::GammaSweep { config, gammas, seeds, out_dir } => {
            commands::cmd_gamma_sweep(&config, &gammas, &seeds, out_dir.as_deref())
        }
        Command::GenData { depth, branching, points, dim, noise, seed, out_dir } => {
            commands::cmd_gen_data(&GenData { depth, branching, points, dim, noise, seed }, &dir(out_dir))
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(msg) => println!("{msg}"),
        Err(e) => {
            eprintln!("{}", e.report());
            std::process::exit(e.exit_code());
        }
    }
}
