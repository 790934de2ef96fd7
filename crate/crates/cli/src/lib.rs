//! Command-line experiment runner: synthetic cohorts, feature extraction,
//! cross-validated experiments, threshold sweeps and result tables.

pub mod commands;
pub mod config;

use std::fmt;

pub use commands::{run_cli, Cli};
pub use config::ExperimentConfig;

/// A command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<agitation::Error> for Failure {
    fn from(e: agitation::Error) -> Self {
        use agitation::Error as E;
        match e {
            E::InvalidArgument(_) => Failure::Usage(e.to_string()),
            E::Numeric(_) => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}
