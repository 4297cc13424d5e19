use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates one of its documented bounds.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    /// An SPS transmission was attempted outside the reserved schedule.
    #[error("vehicle {vehicle}: transmit opportunity at slot {slot} is off-schedule (next reserved slot {expected})")]
    OffSchedule { vehicle: usize, slot: u64, expected: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: line {line}: {reason}")]
    Parse { path: PathBuf, line: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }
}
