//! Command-line front end: dataset generation, training, evaluation,
//! single registrations and trajectory traces.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "reagent", version, about = "Iterative point-cloud registration agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write procedural train and test shapes as XYZ files.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the agent; writes checkpoints and a JSONL log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate registration methods on a dataset split; writes CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Comma-separated subset of icp, expert, agent, agent-argmax.
        #[arg(long, default_value = "icp,expert,agent-argmax")]
        methods: String,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Register one source cloud onto a target; prints the transform as JSON.
    Register {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairArgs,
        /// Also write the registered source as XYZ.
        #[arg(long)]
        registered: Option<PathBuf>,
    },
    /// Per-step JSONL trace of one registration, with action distributions.
    Trace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairArgs,
    },
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Sample actions instead of taking the most likely step.
    #[arg(long)]
    sample: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<reagent::Error> for CliError {
    fn from(e: reagent::Error) -> Self {
        use reagent::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidInput(_) | E::InvalidState(_) => CliError::Config(msg),
            E::Io(_) | E::Parse { .. } | E::Checkpoint(_) => CliError::Io(msg),
            E::Numerical(_) | E::DegenerateInput(_) | E::NoCorrespondences { .. } => CliError::Numerical(msg),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common, out } => commands::generate(&common, out),
        Command::Train {
            common,
            data,
            out,
            epochs,
        } => commands::train(&common, data, out, epochs),
        Command::Eval {
            common,
            data,
            split,
            methods,
            ckpt,
            out,
        } => commands::eval(&common, data, &split, &methods, ckpt, out),
        Command::Register { common, pair, registered } => commands::register(&common, &pair, registered),
        Command::Trace { common, pair } => commands::trace(&common, &pair),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
