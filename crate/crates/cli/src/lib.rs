//! Command-line front end for the deepbelief toolkit.
//!
//! One process per command; all randomness flows from the config's single
//! master seed through derived streams, so identical config and seed means
//! identical outputs. Exit codes: 0 success, 1 runtime failure, 2
//! configuration or usage error.

pub mod commands;
pub mod config;
pub mod oracle_check;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Errors split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration (exit 2).
    Usage(String),
    /// Failure while doing the work (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "deepbelief",
    version,
    about = "Train, fine-tune and run deep belief networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override one config value, e.g. --set train.epochs=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker thread budget. This build computes sequentially, so only the
    /// default of 1 changes nothing; higher values are accepted and noted.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pretrain a DBN layer by layer and write the model plus epoch logs.
    Train(RunArgs),
    /// Convert a pretrained model to a feed-forward net and backpropagate.
    Finetune(RunArgs),
    /// Print test error (classifier) or reconstruction MSE (autoencoder).
    Eval(RunArgs),
    /// Export top-layer features to CSV.
    Features(RunArgs),
    /// Generate samples from extracted features and write PGM grids.
    Generate(RunArgs),
    /// Generate one grid of class-conditional samples.
    GenClass(RunArgs),
    /// Reconstruct inputs and write before/after grids.
    Reconstruct(RunArgs),
    /// Corrupt inputs with Gaussian noise, reconstruct, report MSE.
    Denoise(RunArgs),
    /// Render each layer's basis functions as PGM grids.
    PlotBases(RunArgs),
    /// Run the exact-enumeration property suite on built-in tiny models.
    OracleCheck,
    /// Print a model file's manifest.
    Inspect {
        /// Model file to describe.
        model: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    if args.threads == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    if args.threads > 1 {
        eprintln!(
            "note: this build computes sequentially; --threads {} runs as 1",
            args.threads
        );
    }
    RunConfig::load(&args.config, &args.set)
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Train(args) => commands::train(&load(args)?),
        Command::Finetune(args) => commands::finetune(&load(args)?),
        Command::Eval(args) => commands::eval(&load(args)?),
        Command::Features(args) => commands::features(&load(args)?),
        Command::Generate(args) => commands::generate(&load(args)?),
        Command::GenClass(args) => commands::gen_class(&load(args)?),
        Command::Reconstruct(args) => commands::reconstruct(&load(args)?),
        Command::Denoise(args) => commands::denoise(&load(args)?),
        Command::PlotBases(args) => commands::plot_bases_command(&load(args)?),
        Command::OracleCheck => match oracle_check::run_suite() {
            0 => Ok(()),
            n => Err(CliError::runtime(format!("{n} oracle checks failed"))),
        },
        Command::Inspect { model } => commands::inspect(model),
    }
}

/// Parses `argv` (without the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(
        std::iter::once(std::ffi::OsString::from("deepbelief"))
            .chain(argv.into_iter().map(Into::into)),
    ) {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports --help/--version through the error path.
            if e.use_stderr() {
                eprintln!("{e}");
                return 2;
            }
            print!("{e}");
            return 0;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
