//! Differentiable layers with explicit forward/backward passes.
//!
//! Every layer caches what its backward pass needs during a train-mode
//! forward. Parameter gradients accumulate; callers zero them between steps.

mod activation;
mod conv;
mod dropout;
mod linear;
mod lstm;
mod norm;
mod pool;
mod residual;
mod sequential;

pub use activation::Relu;
pub use conv::Conv2d;
pub use dropout::Dropout;
pub use linear::{Flatten, Linear};
pub use lstm::Lstm;
pub use norm::BatchNorm2d;
pub use pool::{GlobalAvgPool, MaxPool2d};
pub use residual::BasicBlock;
pub use sequential::Sequential;

use std::collections::hash_map::DefaultHasher;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Buffer, Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-pass state threaded through every forward call.
#[derive(Clone, Debug)]
pub struct Context {
    pub mode: Mode,
    pub rng: ChaCha8Rng,
}

impl Context {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self { mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn train(seed: u64) -> Self {
        Self::new(Mode::Train, seed)
    }

    pub fn eval() -> Self {
        Self::new(Mode::Eval, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    MaxPool,
    GlobalAvgPool,
    BatchNorm2d,
    Linear,
    Relu,
    Dropout,
    Lstm,
    Flatten,
    BasicBlock,
    Sequential,
}

pub trait Layer<T: Scalar>: Send {
    fn kind(&self) -> LayerKind;

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>>;

    /// Gradient w.r.t. the input of the most recent train-mode forward.
    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        Vec::new()
    }

    /// Output feature shape (without the batch dimension) for a given input
    /// feature shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    /// Feed the piecewise-linear branch decisions of the last train-mode
    /// forward (ReLU masks, max-pool winners) into `state`. Two forwards
    /// with equal patterns lie on the same differentiable piece.
    fn activation_pattern(&self, _state: &mut DefaultHasher) {}
}

/// Declarative description of a primitive layer, validated before building.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize, bias: bool },
    MaxPool { kernel: usize, stride: usize, padding: usize },
    GlobalAvgPool,
    BatchNorm2d { channels: usize, momentum: f64, epsilon: f64 },
    Linear { in_features: usize, out_features: usize, bias: bool },
    Relu,
    Dropout { rate: f64 },
    Lstm { input_size: usize, hidden_size: usize },
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::MaxPool { .. } => LayerKind::MaxPool,
            LayerSpec::GlobalAvgPool => LayerKind::GlobalAvgPool,
            LayerSpec::BatchNorm2d { .. } => LayerKind::BatchNorm2d,
            LayerSpec::Linear { .. } => LayerKind::Linear,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
            LayerSpec::Lstm { .. } => LayerKind::Lstm,
            LayerSpec::Flatten => LayerKind::Flatten,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NnError::InvalidHyperparameter(msg));
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, .. } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 {
                    return bad(format!("conv2d needs nonzero channels and kernel, got {self:?}"));
                }
                if stride == 0 {
                    return bad("conv2d stride must be >= 1".into());
                }
            }
            LayerSpec::MaxPool { kernel, stride, padding } => {
                if kernel == 0 || stride == 0 {
                    return bad("maxpool kernel and stride must be >= 1".into());
                }
                if 2 * padding > kernel {
                    return bad("maxpool padding must be at most half the kernel".into());
                }
            }
            LayerSpec::BatchNorm2d { channels, momentum, epsilon } => {
                if channels == 0 || !(0.0..=1.0).contains(&momentum) || epsilon <= 0.0 {
                    return bad(format!("invalid batchnorm settings {self:?}"));
                }
            }
            LayerSpec::Linear { in_features, out_features, .. } => {
                if in_features == 0 || out_features == 0 {
                    return bad("linear layer needs nonzero features".into());
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("dropout rate {rate} outside [0, 1)"));
                }
            }
            LayerSpec::Lstm { input_size, hidden_size } => {
                if input_size == 0 || hidden_size == 0 {
                    return bad("lstm sizes must be nonzero".into());
                }
            }
            LayerSpec::GlobalAvgPool | LayerSpec::Relu | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    /// Validate and instantiate with seeded initialization.
    pub fn build<T: Scalar>(&self, name: &str, rng: &mut ChaCha8Rng) -> Result<Box<dyn Layer<T>>> {
        self.validate()?;
        Ok(match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding, bias } => Box::new(
                Conv2d::new(name, in_channels, out_channels, kernel, stride, padding, bias, rng),
            ),
            LayerSpec::MaxPool { kernel, stride, padding } => Box::new(MaxPool2d::new(kernel, stride, padding)),
            LayerSpec::GlobalAvgPool => Box::new(GlobalAvgPool::new()),
            LayerSpec::BatchNorm2d { channels, momentum, epsilon } => {
                Box::new(BatchNorm2d::with_settings(name, channels, momentum, epsilon))
            }
            LayerSpec::Linear { in_features, out_features, bias } => {
                Box::new(Linear::new(name, in_features, out_features, bias, rng))
            }
            LayerSpec::Relu => Box::new(Relu::new()),
            LayerSpec::Dropout { rate } => Box::new(Dropout::new(rate)),
            LayerSpec::Lstm { input_size, hidden_size } => Box::new(Lstm::new(name, input_size, hidden_size, rng)),
            LayerSpec::Flatten => Box::new(Flatten::new()),
        })
    }
}

/// Kaiming-uniform bound for ReLU networks.
pub(crate) fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

pub(crate) fn uniform_tensor<T: Scalar>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    use rand::Rng;
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.gen_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}
