//! `pipeward`: simulate, train, evaluate and audit the pipeline defense.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 internal contract violation.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_arms, Overrides, Settings, DEFAULT_OUT};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pipeward", version, about = "Agentic CI/CD pipeline defense simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration JSON; relative paths inside resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the scenario suite and write it to the output directory.
    Scenarios {
        #[command(flatten)]
        common: Common,
    },
    /// Run one arm over the suite and write its traces, report and ledger.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Arm to run (default Proposed).
        #[arg(long)]
        arm: Option<String>,
        /// Components to disable, comma separated: reasoner, rl, ledger.
        #[arg(long)]
        disable: Option<String>,
    },
    /// Train a mitigation policy and write its snapshot.
    Train {
        #[command(flatten)]
        common: Common,
        /// Learning arm to train for (Proposed or RLOnly).
        #[arg(long)]
        arm: Option<String>,
        /// Training episodes (overrides the training config).
        #[arg(long)]
        episodes: Option<u32>,
    },
    /// Run several arms, compare them, and optionally an ablation.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Arms to run, comma separated (default all four).
        #[arg(long)]
        arm: Option<String>,
        /// Components to ablate from the Proposed arm, comma separated.
        #[arg(long)]
        disable: Option<String>,
    },
    /// Build comparison tables from two or more report JSON files.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = DEFAULT_OUT)]
        out: PathBuf,
    },
    /// Audit a ledger file.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Work with the agent–pipeline protocol.
    Protocol {
        #[command(subcommand)]
        command: ProtocolCommand,
    },
}

#[derive(Debug, Subcommand)]
enum LedgerCommand {
    /// Verify every block; prints "Valid" or the first bad block and why.
    Verify {
        path: PathBuf,
        /// Genesis JSON (default: `<name>.genesis.json` next to the ledger).
        #[arg(long)]
        genesis: Option<PathBuf>,
    },
    /// Dump every block and entry.
    Show { path: PathBuf },
}

#[derive(Debug, Subcommand)]
enum ProtocolCommand {
    /// Serve a file of request frames and emit the response transcript.
    Replay {
        path: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write `transcript.ndjson` here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common, arm: Option<String>, disable: Option<String>) -> Result<Settings, CliError> {
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        arms: arm,
        disable,
    };
    Settings::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scenarios { common } => commands::scenarios(&load(&common, None, None)?),
        Command::Simulate {
            common,
            arm,
            disable,
        } => commands::simulate(&load(&common, arm, disable)?),
        Command::Train {
            common,
            arm,
            episodes,
        } => {
            let arm = arm.as_deref().map(parse_arms).transpose()?;
            let arm = match arm.as_deref() {
                Some([one]) => Some(*one),
                Some(_) => return Err(CliError::config("train takes exactly one arm")),
                None => None,
            };
            let mut settings = load(&common, None, None)?;
            if let Some(n) = episodes {
                settings.train.episodes = n;
            }
            commands::train_cmd(&settings, arm)
        }
        Command::Evaluate {
            common,
            arm,
            disable,
        } => commands::evaluate(&load(&common, arm, disable)?),
        Command::Compare { reports, out } => commands::compare_cmd(&reports, &out),
        Command::Ledger { command } => match command {
            LedgerCommand::Verify { path, genesis } => commands::ledger_verify(&path, genesis.as_deref()),
            LedgerCommand::Show { path } => commands::ledger_show(&path),
        },
        Command::Protocol { command } => match command {
            ProtocolCommand::Replay { path, config, out } => {
                let settings = Settings::load(config.as_deref(), &Overrides::default())?;
                commands::protocol_replay(&settings, &path, out.as_deref())
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
