use std::path::PathBuf;

use thiserror::Error;
use wmc_core::WmcError;

/// Exit codes: 1 usage, 2 data, 3 numerical failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error("station {station}: {source}")]
    Station {
        station: String,
        #[source]
        source: WmcError,
    },

    #[error(transparent)]
    Model(#[from] WmcError),

    #[error("invalid model file: {0}")]
    ModelFile(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Ingest(_) | CliError::ModelFile(_) => 2,
            CliError::Station { source, .. } | CliError::Model(source) => model_exit_code(source),
        }
    }

    pub fn station(station: &str, source: WmcError) -> Self {
        CliError::Station {
            station: station.to_string(),
            source,
        }
    }
}

fn model_exit_code(e: &WmcError) -> i32 {
    match e {
        WmcError::NoUniqueStationary(_)
        | WmcError::NoForecast
        | WmcError::NoViableModel
        | WmcError::DegenerateSample(_) => 3,
        _ => 2,
    }
}

/// Problems found while reading an input CSV. Line numbers are 1-based and
/// count the header.
#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("line 1: unknown column `{0}`")]
    UnknownColumn(String),

    #[error("line 1: missing column `{0}`")]
    MissingColumn(String),

    #[error("line 1: header does not match input kind {expected}")]
    KindMismatch { expected: String },

    #[error("line {line}: unknown class `{label}`")]
    UnknownClass { line: u64, label: String },

    #[error("line {line}: duplicate period {period} for station {station}")]
    DuplicatePeriod {
        line: u64,
        station: String,
        period: String,
    },

    #[error("line {line}: period {period} for station {station} precedes {previous}")]
    NonMonotonePeriod {
        line: u64,
        station: String,
        period: String,
        previous: String,
    },

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("no data rows")]
    Empty,
}
