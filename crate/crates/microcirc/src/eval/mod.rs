//! Validation metrics: accuracy, ROC/AUROC, precision-recall, and the
//! per-patient accuracy report. The septic class is the positive class for
//! every threshold-based metric.

mod metrics;
mod plot;
mod report;

pub use metrics::{
    accuracy, auroc, auroc_pairwise, precision_recall, ConfusionMatrix, PrCurve, RocCurve,
};
pub use plot::{write_line_plot_svg, write_scatter_svg, PlotSeries, ScatterGroup};
pub use report::{patient_report, FramePrediction, PatientReport, PatientRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("labels contain only one class; need both")]
    SingleClass,
    #[error("prediction references unknown frame {0}")]
    UnknownFrame(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;
