use std::path::PathBuf;

use milp_decomp::certificates::CertificateError;
use milp_decomp::coordinator::CoordinatorError;
use milp_decomp::milp::MilpError;
use milp_decomp::model::{LoadError, ScheduleError};
use milp_decomp::pev::PevError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("cannot read config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Pev(#[from] PevError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    /// 3 when a branch-and-bound node cap tripped, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        let node_limit = match self {
            CliError::Pev(e) => e.is_node_limit(),
            CliError::Coordinator(e) => e.is_node_limit(),
            CliError::Certificate(e) => e.is_node_limit(),
            CliError::Milp(e) => e.is_node_limit(),
            _ => false,
        };
        if node_limit {
            crate::EXIT_NODE_LIMIT
        } else {
            crate::EXIT_ERROR
        }
    }
}
