//! Ingestion, configuration and report emission behind the `wmc` binary.

pub mod config;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod simulate;

pub use config::{MaxLag, OutputFormat, RunConfig};
pub use error::{CliError, IngestError};
pub use ingest::{ingest, ingest_reader, InputKind, StationData, StationDataset};
pub use pipeline::{run_pipeline, ModelFile, Report, StationModel, StationReport};
