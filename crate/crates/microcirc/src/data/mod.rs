//! Dataset handling: manifest CSV ingestion, image preprocessing,
//! patient-level train/validation splitting, and the seeded synthetic
//! capillary-image generator that stands in for clinical recordings.

mod manifest;
mod preprocess;
mod split;
mod synth;

pub use manifest::{Cohort, FrameRecord, Label, Manifest};
pub use preprocess::{load_and_preprocess, preprocess_rgb8};
pub use split::patient_split;
pub use synth::{
    generate_corpus, generate_image, write_dataset, SynthFrame, SynthParams,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("record {path}: {reason}")]
    BadRecord { path: String, reason: String },
    #[error("unreadable image {path}: {reason}")]
    BadImage { path: String, reason: String },
    #[error("label {0:?} is neither \"septic\" nor \"non-septic\"")]
    BadLabel(String),
    #[error("cohort {0:?} is not one of train/val/unassigned")]
    BadCohort(String),
    #[error("split infeasible: {0}")]
    SplitInfeasible(String),
    #[error("label {label} has {patients} patient(s); at least 2 are required to split")]
    TooFewPatients { label: String, patients: usize },
    #[error("invalid synthesis parameters: {0}")]
    BadSynthParams(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
