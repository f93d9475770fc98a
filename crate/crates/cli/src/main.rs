//! Single-binary pipeline: synthetic data generation, network training,
//! classical solving, object extraction, evaluation and rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "egoflow", version, about = "Egomotion and object motion from optic flow")]
pub struct Cli {
    /// Seed for every randomized stage; generate falls back to the scene
    /// config seed when absent, other commands to 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for generated artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Suppress human-readable summaries on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into the output directory.
    Generate {
        /// Key=value overrides for the scene parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of samples (sequence mode: number of poses).
        #[arg(long)]
        count: usize,
        /// Generate one temporally coherent sequence instead of
        /// independent samples, and write its ground-truth poses.
        #[arg(long)]
        sequence: bool,
    },
    /// Train the motion-field network on a generated dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: usize,
        /// Key=value overrides for the network parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint_out: PathBuf,
    },
    /// Predict egomotion from a flow file with a trained network.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        /// Keep only the top K percent of hidden activations.
        #[arg(long)]
        topk: Option<f64>,
        /// Also write the predicted partial fields into the output
        /// directory.
        #[arg(long)]
        write_fields: bool,
    },
    /// Recover egomotion from a flow file with the classical
    /// depth-marginalized solver.
    Solve {
        #[arg(long)]
        flow: PathBuf,
        /// Huber-robustified residuals instead of plain least squares.
        #[arg(long)]
        robust: bool,
    },
    /// Extract object motion from flow and inverse depth.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        depth: PathBuf,
    },
    /// Evaluate a trained network on a dataset. Without a checkpoint the
    /// ground truth is scored against itself as a pipeline self-check.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// ate | rpe
        #[arg(long)]
        metric: Option<String>,
        /// Comma-separated top-k percentages to sweep.
        #[arg(long)]
        sparsity_sweep: Option<String>,
    },
    /// Render a flow field or trajectories to a P6 pixmap.
    Viz {
        #[arg(long)]
        flow: Option<PathBuf>,
        /// Pose files, one trajectory each.
        #[arg(long, num_args = 1..)]
        trajectory: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes carrying the exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(msg) => write!(f, "error: {msg}"),
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error_from!(
    std::io::Error,
    egoflow::dataio::DataIoError,
    egoflow::egosolver::SolveError,
    egoflow::evalkit::EvalError,
    egoflow::flowviz::VizError,
    egoflow::geometry::GeometryError,
    egoflow::mfg::MfgError,
    egoflow::objmotion::ObjMotionError,
    egoflow::synthgen::SynthError
);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            let line = err
                .render()
                .to_string()
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .to_string();
            eprintln!("usage error: {line}");
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ CliError::Usage(_)) => {
            eprintln!("{err}");
            ExitCode::from(1)
        }
        Err(err @ CliError::Data(_)) => {
            eprintln!("{err}");
            ExitCode::from(2)
        }
    }
}
