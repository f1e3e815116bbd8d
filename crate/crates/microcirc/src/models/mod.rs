//! The two architectures of the pipeline — a 10-weighted-layer truncated
//! residual classifier and a 3+3 convolutional autoencoder — together with
//! their training loops and a portable binary checkpoint format.

mod autoencoder;
mod checkpoint;
mod classifier;
mod train;

pub use autoencoder::{AutoencoderConfig, AutoencoderModel, BOTTLENECK_LEN};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ParamRecord};
pub use classifier::{ClassifierConfig, ClassifierModel, CODE_LEN};
pub use train::{
    autoencoder_eval_mse, autoencoder_from_checkpoint, autoencoder_to_checkpoint,
    classifier_accuracy, classifier_from_checkpoint, classifier_to_checkpoint, stack,
    train_autoencoder, train_classifier, AutoencoderEpoch, ClassifierEpoch, LabeledFrame,
    TrainConfig, UnlabeledFrame,
};

use thiserror::Error;

use crate::nn::NnError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("input {h}x{w} below the minimum spatial size of {min}x{min}")]
    InputTooSmall { h: usize, w: usize, min: usize },
    #[error("strict mode expects a {expected_h}x{expected_w} input, got {h}x{w}")]
    NotReferenceSize {
        expected_h: usize,
        expected_w: usize,
        h: usize,
        w: usize,
    },
    #[error("patients present in both train and validation cohorts: {0:?}")]
    PatientOverlap(Vec<String>),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint has bad magic (expected \"DFML\")")]
    BadMagic,
    #[error("checkpoint version {got} unsupported (expected {expected})")]
    VersionMismatch { got: u32, expected: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("checkpoint parameter {name} has invalid shape {shape:?}")]
    BadShapeHeader { name: String, shape: Vec<u32> },
    #[error("checkpoint parameter {name}: shape {shape:?} disagrees with payload of {payload} floats")]
    ShapePayloadMismatch {
        name: String,
        shape: Vec<u32>,
        payload: usize,
    },
    #[error("checkpoint descriptor: {0}")]
    BadDescriptor(String),
    #[error("checkpoint is for a {got} model, expected {expected}")]
    WrongArchitecture { got: String, expected: String },
    #[error("checkpoint parameter {0} unknown to this architecture")]
    UnknownParam(String),
    #[error("checkpoint is missing parameter {0}")]
    MissingParam(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
