//! Trainable layers, loss functions, and the Adam optimizer.
//!
//! Layers follow a forward-train / backward protocol: `forward_train`
//! caches whatever the backward pass needs and `backward` accumulates
//! parameter gradients while returning the input cotangent. `forward_infer`
//! takes `&self` and caches nothing, so a shared model can serve
//! concurrent callers.

mod adam;
mod block;
pub mod init;
mod layers;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use block::ResidualBlock;
pub use layers::{BatchNormLayer, ConvLayer, ConvTransposeLayer, LinearLayer};
pub use loss::{cross_entropy, mse_loss};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("backward called without a cached forward pass")]
    NoCache,
    #[error("batchnorm train mode needs at least 2 elements per channel, got {0}")]
    DegenerateBatch(usize),
    #[error("target class {class} out of range for {classes} classes")]
    BadTarget { class: usize, classes: usize },
    #[error("residual block with {in_ch}->{out_ch} channels at stride {stride} requires a projection shortcut")]
    MissingProjection {
        in_ch: usize,
        out_ch: usize,
        stride: usize,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// A mutable view of one parameter tensor and its gradient accumulator,
/// as handed to the optimizer.
pub type ParamGrad<'a, E> = (&'a mut crate::tensor::Tensor<E>, &'a mut crate::tensor::Tensor<E>);
