use std::collections::hash_map::DefaultHasher;
use std::hash::Hash;

use super::{Context, Layer, LayerKind, Mode};
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Max pooling over square windows; padded cells never win.
#[derive(Debug)]
pub struct MaxPool2d {
    kernel: usize,
    stride: usize,
    padding: usize,
    argmax: Option<Vec<usize>>,
    input_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(kernel > 0 && stride > 0, "maxpool kernel and stride must be positive");
        Self { kernel, stride, padding, argmax: None, input_shape: Vec::new() }
    }

    fn out_dim(&self, n: usize) -> Result<usize> {
        let padded = n + 2 * self.padding;
        if padded < self.kernel {
            return Err(NnError::shape("maxpool", &[self.kernel], &[padded]));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }
}

impl<T: Scalar> Layer<T> for MaxPool2d {
    fn kind(&self) -> LayerKind {
        LayerKind::MaxPool
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        input.expect_rank(4, "maxpool forward")?;
        let (b, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
        let (oh, ow) = (self.out_dim(h)?, self.out_dim(w)?);
        let mut out = Tensor::zeros(&[b, c, oh, ow]);
        let mut argmax = vec![0usize; b * c * oh * ow];
        let x = input.data();
        let pad = self.padding as isize;
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = usize::MAX;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            if best_idx == usize::MAX || x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        if ctx.mode == Mode::Train {
            self.argmax = Some(argmax);
            self.input_shape = input.shape().to_vec();
        }
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let argmax = self.argmax.as_ref().ok_or(NnError::BackwardBeforeForward("maxpool"))?;
        if argmax.len() != grad_output.len() {
            return Err(NnError::shape("maxpool backward", &[argmax.len()], &[grad_output.len()]));
        }
        let mut dx = Tensor::zeros(&self.input_shape);
        let d = dx.data_mut();
        for (&i, &g) in argmax.iter().zip(grad_output.data()) {
            d[i] += g;
        }
        Ok(dx)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 {
            return Err(NnError::shape("maxpool", &[0, 0, 0], input));
        }
        Ok(vec![input[0], self.out_dim(input[1])?, self.out_dim(input[2])?])
    }

    fn activation_pattern(&self, state: &mut DefaultHasher) {
        self.argmax.hash(state);
    }
}

/// Mean over spatial dimensions: `[B, C, H, W] -> [B, C]`.
#[derive(Debug, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool {
    fn kind(&self) -> LayerKind {
        LayerKind::GlobalAvgPool
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        input.expect_rank(4, "global_avgpool forward")?;
        let (b, c) = (input.shape()[0], input.shape()[1]);
        let area = input.shape()[2] * input.shape()[3];
        let inv = T::one() / T::from_usize_lossy(area);
        let data = input.data().chunks_exact(area).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        self.input_shape = Some(input.shape().to_vec());
        Tensor::from_vec(&[b, c], data)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.as_ref().ok_or(NnError::BackwardBeforeForward("global_avgpool"))?;
        let area = shape[2] * shape[3];
        if grad_output.len() * area != shape.iter().product::<usize>() {
            return Err(NnError::shape("global_avgpool backward", &shape[..2], grad_output.shape()));
        }
        let inv = T::one() / T::from_usize_lossy(area);
        let mut dx = Tensor::zeros(shape);
        for (plane, &g) in dx.data_mut().chunks_exact_mut(area).zip(grad_output.data()) {
            plane.iter_mut().for_each(|v| *v = g * inv);
        }
        Ok(dx)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![input[0]])
    }
}
