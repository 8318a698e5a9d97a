//! A small CPU tensor engine with hand-written backpropagation: periodic
//! convolutions, batch normalization, dense layers, leaky ReLU and sigmoid
//! activations, cross-entropy and squared-error losses, and Adam.
//!
//! Everything is generic over [`Scalar`], so the same layers train in `f32`
//! and are gradient-checked in `f64`.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod scalar;
pub mod sequential;
pub mod tensor;

pub use gradcheck::grad_check;
pub use layers::{BatchNorm, Conv, Dense, Layer, LeakyRelu, Mode, Param, Sigmoid};
pub use loss::{cross_entropy, mse, Loss};
pub use optim::Adam;
pub use scalar::Scalar;
pub use sequential::Sequential;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("batch normalization in training mode needs a batch larger than 1")]
    BatchTooSmall,
    #[error("backward called without a cached forward pass")]
    NoCache,
    #[error("spatial size {size} is not divisible by stride {stride}")]
    StrideMismatch { size: usize, stride: usize },
    #[error("optimizer state does not match the parameter list")]
    OptimizerMismatch,
}

pub type Result<T> = std::result::Result<T, Error>;
