use std::fmt;
use std::process::ExitCode;

use cfc_core::Error;

/// A flag combination rejected before any output is written.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Input files that are readable but inconsistent with each other.
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

pub fn data(msg: impl Into<String>) -> anyhow::Error {
    DataError(msg.into()).into()
}

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const INTERNAL: u8 = 3;

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return ExitCode::from(USAGE);
        }
        if cause.is::<DataError>() {
            return ExitCode::from(DATA);
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return ExitCode::from(match e {
                Error::InvalidParameter(_) => USAGE,
                Error::Io { .. }
                | Error::Schema(_)
                | Error::Header(_)
                | Error::RowArity { .. }
                | Error::BadCell { .. }
                | Error::Csv(_)
                | Error::EmptyDataset
                | Error::TooFewInstances { .. }
                | Error::SchemaMismatch { .. }
                | Error::Version { .. }
                | Error::Corrupted(_) => DATA,
                Error::LengthMismatch { .. }
                | Error::DegenerateCluster { .. }
                | Error::Serde(_) => INTERNAL,
            });
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return ExitCode::from(DATA);
        }
    }
    ExitCode::from(INTERNAL)
}
