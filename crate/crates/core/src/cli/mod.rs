//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 infeasible synthesis,
//! 3 input error.

mod artifact;
mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use artifact::ControllerArtifact;
pub use commands::{cmd_reproduce_paper, cmd_simulate, cmd_synth, cmd_verify, plot_script};
pub use config::{ControllerKind, PerturbationConfig, Problem, ProblemConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "homcone", version, about = "Homogeneous nonovershooting stabilizers on conic safe sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Problem configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sampling and noise seed (overrides `sampling.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples per constraint slice (overrides `sampling.count`).
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a controller and write `controller.toml`.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Homogeneity degree (overrides `mu`).
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
    /// Run the sampled checks on a stored controller.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Controller artifact (defaults to `<out>/controller.toml`).
        #[arg(long)]
        controller: Option<PathBuf>,
    },
    /// Simulate a stored controller and write a CSV trace and plot script.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        controller: Option<PathBuf>,
    },
    /// Run the built-in three-state example checks.
    ReproducePaper {
        /// List the checks without running them.
        #[arg(long)]
        list: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::NotSquare { .. }
        | Error::NonFinite(_)
        | Error::Dimension { .. }
        | Error::Singular(_)
        | Error::InvalidDilation(_)
        | Error::InvalidInput(_)
        | Error::Io { .. }
        | Error::Parse { .. } => EXIT_INPUT,
        _ => EXIT_VERIFY_FAILED,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { EXIT_OK } else { EXIT_INPUT };
        }
    };
    let result = match cli.command {
        Command::Synth { common, mu } => cmd_synth(&common, mu),
        Command::Verify { common, controller } => cmd_verify(&common, controller.as_deref()),
        Command::Simulate { common, controller } => cmd_simulate(&common, controller.as_deref()),
        Command::ReproducePaper {
            list,
            seed,
            samples,
        } => cmd_reproduce_paper(list, seed.unwrap_or(0), samples.unwrap_or(512)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
