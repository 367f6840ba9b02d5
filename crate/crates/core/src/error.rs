use std::path::PathBuf;

use thiserror::Error;

/// Invalid parameters or scenario contents. Maps to exit code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed scenario {path}{}: {message}", at_line(*line))]
    Syntax {
        path: String,
        line: Option<usize>,
        message: String,
    },
    /// A well-formed scenario whose values break a rule.
    #[error("{path}{}: {source}", at_line(*line))]
    Scenario {
        path: String,
        line: Option<usize>,
        source: Box<ConfigError>,
    },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unknown agent id {id} (node count {node_count})")]
    UnknownAgent { id: usize, node_count: usize },
    #[error("grid of {n} agents with spacing {spacing} m does not fit the arena")]
    GridDoesNotFit { n: usize, spacing: f64 },
    #[error("cannot compare summaries: {0}")]
    Pairing(String),
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!(":{l}")).unwrap_or_default()
}

impl ConfigError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

/// Broken accounting inside the engine. Maps to exit code 4.
#[derive(Debug, Error)]
pub enum InvariantError {
    #[error("step {step}: conservation violated: generated {generated} != delivered {delivered} + on agents {on_agents} + corrupted {corrupted} + dropped {dropped}")]
    Conservation {
        step: u64,
        generated: u64,
        delivered: u64,
        on_agents: u64,
        corrupted: u64,
        dropped: u64,
    },
    #[error("lost count {lost} exceeds generated count {generated}")]
    LostExceedsGenerated { generated: u64, lost: u64 },
    #[error("datum {creator}:{seq} delivered twice")]
    DuplicateDelivery { creator: usize, seq: u64 },
    #[error("agent {agent} holds {len} items with capacity {capacity}")]
    Overfull {
        agent: usize,
        len: usize,
        capacity: usize,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Csv { .. } => 3,
            Error::Invariant(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
