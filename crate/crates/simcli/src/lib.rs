//! Scenario runner, randomized episodes and privacy reports on top of
//! `zclaim-core`.

pub mod config;
pub mod episodes;
pub mod privacy;
pub mod runner;
pub mod scenario;

use thiserror::Error;

use zclaim_core::protocol::ProtocolError;
use zclaim_core::splitting::SplitError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{}{msg}", if *.line > 0 { format!("line {line}: ") } else { String::new() })]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("h = {h} needs 2^{h} exact rows; use h <= {max} (tables are enumerated exhaustively)", max = privacy::MAX_H)]
    TooLarge { h: u32 },
}

/// Names of witness-side fields that must never reach a public record.
pub const WITNESS_FIELDS: [&str; 9] = [
    "obligations",
    "value",
    "rcm",
    "secret",
    "shared_secret",
    "ivk",
    "nsk",
    "history",
    "witness",
];

impl SimError {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        SimError::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// `line` 0 means the problem is not tied to one line.
    pub fn config(line: usize, msg: impl ToString) -> Self {
        SimError::Config {
            line,
            msg: msg.to_string(),
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            SimError::Parse { line, .. } | SimError::Config { line, .. } if *line > 0 => {
                Some(*line)
            }
            _ => None,
        }
    }
}
