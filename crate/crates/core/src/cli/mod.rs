//! Config-driven batch front end behind the `finsler-forge` binary.
//!
//! Exit codes: 0 success, 1 a `verify` residual above tolerance, 2 input or
//! parse error, 3 model error (shape or precondition), 4 numeric failure,
//! 5 I/O.

pub mod config;
pub mod expr;
pub mod report;
mod run;

use thiserror::Error;

use crate::cosmo::CosmoError;
use crate::finsler_core::FinslerError;
use crate::jetcalc::JetError;
use crate::nholon::GeomError;

pub use config::{Command, RunConfig};
pub use report::{export_csv, read_csv, Cell, Table};
pub use run::{residual_report, run, Outcome, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at {at}: {message}")]
    Parse { at: String, message: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Input(_) => 2,
            CliError::Model(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) | CliError::Csv(_) => 5,
        }
    }
}

impl From<JetError> for CliError {
    fn from(e: JetError) -> CliError {
        match e {
            JetError::DimensionMismatch { .. } => CliError::Model(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> CliError {
        match e {
            GeomError::Jet(j) => j.into(),
            GeomError::Degenerate { .. } => CliError::Numeric(e.to_string()),
            GeomError::Shape(_) | GeomError::Precondition(_) => CliError::Model(e.to_string()),
        }
    }
}

impl From<FinslerError> for CliError {
    fn from(e: FinslerError) -> CliError {
        match e {
            FinslerError::Jet(j) => j.into(),
            FinslerError::Geom(g) => g.into(),
            FinslerError::Precondition(_) | FinslerError::Params(_) => CliError::Model(e.to_string()),
        }
    }
}

impl From<CosmoError> for CliError {
    fn from(e: CosmoError) -> CliError {
        match e {
            CosmoError::Jet(j) => j.into(),
            CosmoError::Input(_) => CliError::Input(e.to_string()),
            CosmoError::Precondition(_) | CosmoError::Dispersion(_) => CliError::Model(e.to_string()),
        }
    }
}
