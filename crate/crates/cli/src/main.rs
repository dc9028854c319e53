use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod cmd;
mod error;
mod report;

use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "rfc-hypgcn", version, about = "Hybrid-pruned skeleton GCN toolkit")]
struct Cli {
    /// Worker threads for sample-parallel subcommands (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Raise log verbosity (repeatable); RFC_HYPGCN_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic model.
    Synth(SynthArgs),
    /// Hybrid-prune a model with a prune spec.
    Prune(PruneArgs),
    /// Check the sparse path against the dense reference on random inputs.
    Verify(VerifyArgs),
    /// Size RFC mini-banks and compare storage against dense and CSC.
    Rfc(RfcArgs),
    /// Static versus dynamic Dyn-Mult-PE allocation.
    Sim(SimArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 60)]
    pub classes: usize,
    /// Input frames recorded in the model header.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Comma-separated block widths for a small model instead of the
    /// standard 10-block layout.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Strides for `--widths`, default 1.
    #[arg(long, value_delimiter = ',', requires = "widths")]
    pub strides: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Unpruned model.
    #[arg(long)]
    pub model: PathBuf,
    /// Pruned model file; without it (and without `--spec`) the unpruned
    /// model is checked.
    #[arg(long, conflicts_with = "spec")]
    pub pruned: Option<PathBuf>,
    /// Prune in memory with this spec instead of loading a pruned file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Input length; defaults to the model's frame count.
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RfcArgs {
    #[command(flatten)]
    pub common: Common,
    /// Storage study config with per-layer histograms or traces.
    #[arg(long, required_unless_present = "model", conflicts_with = "model")]
    pub scenario: Option<PathBuf>,
    /// Measure histograms from block outputs of this (pruned) model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 4, requires = "model")]
    pub samples: usize,
    #[arg(long, requires = "model")]
    pub frames: Option<usize>,
    /// Mini-bank depth quantum in lines; overrides the config.
    #[arg(long)]
    pub granularity: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub scenario: PathBuf,
    /// Events per PE group; overrides the scenario.
    #[arg(long)]
    pub events: Option<usize>,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RFC_HYPGCN_LOG", default))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    match cli.command {
        Command::Synth(a) => cmd::synth::run(&a),
        Command::Prune(a) => cmd::prune::run(&a),
        Command::Verify(a) => cmd::verify::run(&a),
        Command::Rfc(a) => cmd::rfc::run(&a),
        Command::Sim(a) => cmd::sim::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
