use std::path::Path;

use pipeward_eval::EvalError;
use thiserror::Error;

/// Failure of a command, classified by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// A ledger or other artifact failed verification.
    #[error("{0}")]
    Verification(String),
    /// Bad flags, unreadable or invalid configuration, missing inputs.
    #[error("{0}")]
    Config(String),
    /// An internal invariant broke while running.
    #[error("{0}")]
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Contract(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> CliError {
        CliError::Config(msg.into())
    }

    pub fn read(path: &Path, err: std::io::Error) -> CliError {
        CliError::Config(format!("cannot read {}: {err}", path.display()))
    }

    pub fn parse(path: &Path, err: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("invalid {}: {err}", path.display()))
    }

    pub fn write(path: &Path, err: std::io::Error) -> CliError {
        CliError::Contract(format!("cannot write {}: {err}", path.display()))
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> CliError {
        match err {
            EvalError::MissingPolicy(_)
            | EvalError::DisableOnBaseline(_)
            | EvalError::EmptySuite(_)
            | EvalError::NoEpisodes
            | EvalError::Policy(_)
            | EvalError::Config(_)
            | EvalError::Train(_)
            | EvalError::Mismatch(_) => CliError::Config(err.to_string()),
            EvalError::Env(_)
            | EvalError::Ledger(_)
            | EvalError::LedgerInvalid(_)
            | EvalError::Metrics(_) => CliError::Contract(err.to_string()),
        }
    }
}
