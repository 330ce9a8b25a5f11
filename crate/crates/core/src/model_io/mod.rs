//! Feature schema, network representation, dataset ingestion/normalization
//! and serialization of the artifacts.

mod dataset;
mod network;
mod schema;

pub use dataset::{ingest_csv, DataRow, Dataset, Split};
pub use network::{
    load_model, model_hash, save_model, Activation, FeedForwardNetwork, Layer, ModelDocument,
};
pub use schema::{CategoricalAssignment, FeatureKind, FeatureSchema, FeatureSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("parse error at row {row}: {msg}")]
    ParseError { row: usize, msg: String },
    #[error("structural error: {0}")]
    Structural(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
