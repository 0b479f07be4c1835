//! Batch experiment runner behind the `ser` binary: configuration, SNR
//! sweeps, CSV/manifest output and the one-shot validation suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod manifest;
pub mod sweep;
pub mod validate;

use std::fmt;

pub use config::{ExperimentConfig, FMode, LogBase, Model};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant violated{}: {detail}", RowSuffix(*row))]
    Invariant { row: Option<usize>, detail: String },
    #[error("numerical failure{}: {source}", RowSuffix(*row))]
    Numerical {
        row: Option<usize>,
        source: sensing_rate::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

struct RowSuffix(Option<usize>);

impl fmt::Display for RowSuffix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(r) => write!(f, " at row {r}"),
            None => Ok(()),
        }
    }
}

impl RunError {
    /// 1 invariant violation, 2 config error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invariant { .. } => 1,
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Numerical { .. } => 3,
        }
    }
}
