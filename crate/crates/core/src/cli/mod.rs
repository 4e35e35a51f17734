//! The `tailr` command line: argument parsing, config resolution, and exit
//! codes. Each subcommand lives in [`commands`].

mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use commands::{resolve_learners, Learner};
pub use config::{default_objective, Metric, RunConfig, SweepConfig, ToyConfig, VerifyConfig, DEFAULT_TAILR};
pub use output::{num, verify_manifest, FileRecord, Outputs, RunManifest, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tailr", version, about = "Total-variation-guided sequence training experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a config file with every default filled in.
    Init(CommonArgs),
    /// Run the randomized bound verification suite.
    Verify(CommonArgs),
    /// Fit one Gaussian to a two-component mixture under KLD and TVD.
    ToyGaussian(CommonArgs),
    /// Build the oracle, synthesize data, train and evaluate learners.
    Synth(CommonArgs),
    /// Perturbation traces, error maps and overestimation by length.
    Perturb(CommonArgs),
    /// Excess accumulated error per learner and context length.
    Exacc(CommonArgs),
    /// Train TaiLr learners over a grid of gamma values.
    SweepGamma(CommonArgs),
}

#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated learner tags (mle, tailr, gold, unlikelihood,
    /// loss_truncation, oracle).
    #[arg(long, value_delimiter = ',')]
    pub objectives: Option<Vec<String>>,
    /// Overrides the verification trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub no_plots: bool,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Init(_) => "init",
            Command::Verify(_) => "verify",
            Command::ToyGaussian(_) => "toy-gaussian",
            Command::Synth(_) => "synth",
            Command::Perturb(_) => "perturb",
            Command::Exacc(_) => "exacc",
            Command::SweepGamma(_) => "sweep-gamma",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Init(a)
            | Command::Verify(a)
            | Command::ToyGaussian(a)
            | Command::Synth(a)
            | Command::Perturb(a)
            | Command::Exacc(a)
            | Command::SweepGamma(a) => a,
        }
    }
}

/// Exit code for an error raised while running a subcommand.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::OutOfRange { .. } | Error::VocabMismatch(..) | Error::MissingCorpus(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("tailr {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}
