//! A small, deterministic differentiable-layer engine and the classifier
//! architectures built on it.
//!
//! Everything is generic over [`Scalar`]; training uses `f32` and gradient
//! checks use `f64`. The aliases below name the two concrete instantiations.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod models;
pub mod optim;
pub mod scalar;
pub mod suite;
pub mod tensor;

pub use error::{NnError, Result};
pub use layers::{Context, Layer, LayerKind, LayerSpec, Mode};
pub use loss::{predict, softmax, softmax_cross_entropy, CrossEntropy};
pub use models::{Architecture, Backbone, Head, Model, ModelSpec};
pub use optim::{Adam, LrSchedule};
pub use scalar::Scalar;
pub use tensor::{Buffer, Param, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type Adam32 = Adam<f32>;
