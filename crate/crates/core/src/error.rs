use std::path::PathBuf;

use thiserror::Error;

use crate::domain::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input file {0}")]
    MissingFile(PathBuf),

    #[error("{file}: row {row}: {message}")]
    MalformedRow {
        file: String,
        row: usize,
        message: String,
    },

    #[error("instance failed validation ({} violation(s)): {}", .0.len(), summarize(.0))]
    Invalid(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("zone {zone}: pool exhausted, short by {shortfall:.3} t of {direction}")]
    PoolExhausted {
        zone: String,
        direction: &'static str,
        shortfall: f64,
    },

    #[error("zone {zone}, commodity {commodity}: no qualifying establishment for port flow")]
    NoTradeCandidate { zone: String, commodity: u8 },

    #[error("no distance entry for zones {from} -> {to}")]
    MissingDistance { from: String, to: String },

    #[error("malformed model: {0}")]
    Model(String),

    #[error("subproblem {subproblem} ended with status {status}")]
    Subproblem {
        subproblem: &'static str,
        status: String,
    },

    #[error("solver numerical failure: {0}")]
    Numerical(String),

    #[error("external solver: {0}")]
    External(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn summarize(violations: &[Violation]) -> String {
    let mut parts: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
    if violations.len() > 5 {
        parts.push(format!("... and {} more", violations.len() - 5));
    }
    parts.join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
