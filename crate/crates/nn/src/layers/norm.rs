use super::{Context, Layer, LayerKind, Mode};
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Buffer, Param, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization for NCHW input.
///
/// Train mode normalizes with biased batch statistics and folds the unbiased
/// variance into the running estimate; eval mode uses the running estimates.
#[derive(Debug)]
pub struct BatchNorm2d<T> {
    channels: usize,
    momentum: f64,
    epsilon: f64,
    gamma: Param<T>,
    beta: Param<T>,
    running_mean: Buffer<T>,
    running_var: Buffer<T>,
    cache: Option<Cache<T>>,
}

#[derive(Debug)]
struct Cache<T> {
    mode: Mode,
    shape: Vec<usize>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self::with_settings(name, channels, DEFAULT_MOMENTUM, DEFAULT_EPSILON)
    }

    pub fn with_settings(name: &str, channels: usize, momentum: f64, epsilon: f64) -> Self {
        Self {
            channels,
            momentum,
            epsilon,
            gamma: Param::new(format!("{name}.weight"), Tensor::full(&[channels], T::one())),
            beta: Param::new(format!("{name}.bias"), Tensor::zeros(&[channels])),
            running_mean: Buffer { name: format!("{name}.running_mean"), value: Tensor::zeros(&[channels]) },
            running_var: Buffer { name: format!("{name}.running_var"), value: Tensor::full(&[channels], T::one()) },
            cache: None,
        }
    }

    pub fn running_mean(&self) -> &[T] {
        self.running_mean.value.data()
    }

    pub fn running_var(&self) -> &[T] {
        self.running_var.value.data()
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::BatchNorm2d
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        input.expect_rank(4, "batchnorm2d forward")?;
        let (b, c) = (input.shape()[0], input.shape()[1]);
        if c != self.channels {
            return Err(NnError::shape("batchnorm2d forward", &[b, self.channels], &input.shape()[..2]));
        }
        let area = input.shape()[2] * input.shape()[3];
        let count = b * area;
        let x = input.data();
        let eps = T::lit(self.epsilon);
        let mut out = Tensor::zeros(input.shape());
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];

        for ch in 0..c {
            let planes = (0..b).map(|n| (n * c + ch) * area);
            let (mean, var) = if ctx.mode == Mode::Train {
                if count < 2 {
                    return Err(NnError::shape("batchnorm2d needs >1 value per channel", &[2], &[count]));
                }
                let inv_n = T::one() / T::from_usize_lossy(count);
                let mean = planes.clone().flat_map(|s| &x[s..s + area]).copied().sum::<T>() * inv_n;
                let var = planes
                    .clone()
                    .flat_map(|s| &x[s..s + area])
                    .map(|&v| (v - mean) * (v - mean))
                    .sum::<T>()
                    * inv_n;
                let m = T::lit(self.momentum);
                let unbiased = var * T::from_usize_lossy(count) / T::from_usize_lossy(count - 1);
                let rm = &mut self.running_mean.value.data_mut()[ch];
                *rm = (T::one() - m) * *rm + m * mean;
                let rv = &mut self.running_var.value.data_mut()[ch];
                *rv = (T::one() - m) * *rv + m * unbiased;
                (mean, var)
            } else {
                (self.running_mean.value.data()[ch], self.running_var.value.data()[ch])
            };
            let istd = T::one() / (var + eps).sqrt();
            inv_std[ch] = istd;
            let (g, bta) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for s in planes {
                for i in s..s + area {
                    let h = (x[i] - mean) * istd;
                    xhat[i] = h;
                    out.data_mut()[i] = g * h + bta;
                }
            }
        }
        if ctx.mode == Mode::Train {
            self.cache = Some(Cache { mode: ctx.mode, shape: input.shape().to_vec(), xhat, inv_std });
        }
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(NnError::BackwardBeforeForward("batchnorm2d"))?;
        if grad_output.shape() != cache.shape.as_slice() {
            return Err(NnError::shape("batchnorm2d backward", &cache.shape, grad_output.shape()));
        }
        let (b, c) = (cache.shape[0], cache.shape[1]);
        let area = cache.shape[2] * cache.shape[3];
        let n = T::from_usize_lossy(b * area);
        let dy = grad_output.data();
        let mut dx = Tensor::zeros(&cache.shape);
        for ch in 0..c {
            let planes: Vec<usize> = (0..b).map(|s| (s * c + ch) * area).collect();
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for &s in &planes {
                for i in s..s + area {
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * cache.xhat[i];
                }
            }
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat;
            self.beta.grad.data_mut()[ch] += sum_dy;
            let g = self.gamma.value.data()[ch];
            let istd = cache.inv_std[ch];
            for &s in &planes {
                for i in s..s + area {
                    dx.data_mut()[i] = match cache.mode {
                        Mode::Train => g * istd / n * (n * dy[i] - sum_dy - cache.xhat[i] * sum_dy_xhat),
                        Mode::Eval => g * istd * dy[i],
                    };
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }
}
