//! Domain entities, input loading and validation, and the synthetic world
//! generator.

mod io;
mod synth;
mod types;
mod validate;

pub use io::{dataset_digest, load_dataset, load_raw, serialize_dataset, write_dataset, DatasetPaths};
pub use synth::{synth_world, synth_world_with, SynthSpec};
pub use types::*;
pub use validate::{validate, ValidationReport, Violation};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation in {file}, row {row}, column {column}: {message}")]
    Schema {
        file: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("negative monetary value {value} in {file} at {location}")]
    NegativeValue { file: String, location: String, value: f64 },
    #[error("referential integrity failure: {0}")]
    ReferentialIntegrity(String),
    #[error("dataset has an empty year range")]
    EmptyYearRange,
    #[error("dataset failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("synthetic world: {0}")]
    Synth(String),
}
