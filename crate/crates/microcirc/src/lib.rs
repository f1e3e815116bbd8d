//! Septic vs non-septic microcirculation image pipeline: a from-scratch
//! CNN stack (tensors, layers, Adam), a truncated residual classifier and
//! a convolutional autoencoder, t-SNE and k-means on the learned features,
//! evaluation metrics, and a seeded synthetic capillary-image generator.

pub mod cli;
pub mod data;
pub mod embed;
pub mod eval;
pub mod models;
pub mod nn;
pub mod tensor;
