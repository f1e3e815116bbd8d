//! Unsupervised structure: exact t-SNE for 2-d visualization of classifier
//! codes, k-means for clustering autoencoder bottleneck vectors, and
//! cluster-to-label accuracy.

mod kmeans;
mod tsne;

pub use kmeans::{cluster_label_accuracy, kmeans, kmeans_restarts, KMeansResult};
pub use tsne::{
    perplexity_calibration, tsne, write_assignments_csv, write_embedding_csv, write_trace_csv,
    Embedding2D, TsneConfig,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("perplexity {perplexity} must be below the point count {points}")]
    PerplexityTooLarge { perplexity: f64, points: usize },
    #[error("k = {k} exceeds the number of points {points}")]
    KTooLarge { k: usize, points: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, EmbedError>;
