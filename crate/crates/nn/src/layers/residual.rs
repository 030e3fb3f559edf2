use std::collections::hash_map::DefaultHasher;

use rand_chacha::ChaCha8Rng;

use super::{BatchNorm2d, Context, Conv2d, Layer, LayerKind, Relu};
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Buffer, Param, Tensor};

/// ResNet basic block: two 3x3 conv/batchnorm pairs plus a shortcut, which is
/// the identity unless the stride or width changes (then a 1x1 projection).
/// Convolutions carry no bias.
pub struct BasicBlock<T> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    relu1: Relu<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    projection: Option<(Conv2d<T>, BatchNorm2d<T>)>,
    relu_out: Relu<T>,
}

impl<T: Scalar> BasicBlock<T> {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let conv1 = Conv2d::new(&format!("{name}.conv1"), in_channels, out_channels, 3, stride, 1, false, rng);
        let conv2 = Conv2d::new(&format!("{name}.conv2"), out_channels, out_channels, 3, 1, 1, false, rng);
        let projection = (stride != 1 || in_channels != out_channels).then(|| {
            (
                Conv2d::new(&format!("{name}.downsample.0"), in_channels, out_channels, 1, stride, 0, false, rng),
                BatchNorm2d::new(&format!("{name}.downsample.1"), out_channels),
            )
        });
        Self {
            conv1,
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), out_channels),
            relu1: Relu::new(),
            conv2,
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), out_channels),
            projection,
            relu_out: Relu::new(),
        }
    }
}

impl<T: Scalar> Layer<T> for BasicBlock<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::BasicBlock
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        let y = self.conv1.forward(input, ctx)?;
        let y = self.bn1.forward(&y, ctx)?;
        let y = self.relu1.forward(&y, ctx)?;
        let y = self.conv2.forward(&y, ctx)?;
        let mut y = self.bn2.forward(&y, ctx)?;
        let shortcut = match &mut self.projection {
            Some((conv, bn)) => {
                let s = conv.forward(input, ctx)?;
                bn.forward(&s, ctx)?
            }
            None => input.clone(),
        };
        if shortcut.shape() != y.shape() {
            return Err(NnError::shape("basic block shortcut", y.shape(), shortcut.shape()));
        }
        for (a, &b) in y.data_mut().iter_mut().zip(shortcut.data()) {
            *a += b;
        }
        self.relu_out.forward(&y, ctx)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu_out.backward(grad_output)?;
        let main = self.bn2.backward(&g)?;
        let main = self.conv2.backward(&main)?;
        let main = self.relu1.backward(&main)?;
        let main = self.bn1.backward(&main)?;
        let mut dx = self.conv1.backward(&main)?;
        let short = match &mut self.projection {
            Some((conv, bn)) => {
                let s = bn.backward(&g)?;
                conv.backward(&s)?
            }
            None => g,
        };
        for (a, &b) in dx.data_mut().iter_mut().zip(short.data()) {
            *a += b;
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.conv1.params();
        p.extend(self.bn1.params());
        p.extend(self.conv2.params());
        p.extend(self.bn2.params());
        if let Some((conv, bn)) = &self.projection {
            p.extend(conv.params());
            p.extend(bn.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.conv1.params_mut();
        p.extend(self.bn1.params_mut());
        p.extend(self.conv2.params_mut());
        p.extend(self.bn2.params_mut());
        if let Some((conv, bn)) = &mut self.projection {
            p.extend(conv.params_mut());
            p.extend(bn.params_mut());
        }
        p
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut b = self.bn1.buffers();
        b.extend(self.bn2.buffers());
        if let Some((_, bn)) = &self.projection {
            b.extend(bn.buffers());
        }
        b
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut b = self.bn1.buffers_mut();
        b.extend(self.bn2.buffers_mut());
        if let Some((_, bn)) = &mut self.projection {
            b.extend(bn.buffers_mut());
        }
        b
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.conv1.output_shape(input)
    }

    fn activation_pattern(&self, state: &mut DefaultHasher) {
        self.relu1.activation_pattern(state);
        self.relu_out.activation_pattern(state);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn identity_block_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = BasicBlock::<f32>::new("b", 64, 64, 1, &mut rng);
        let n: usize = block.params().iter().map(|p| p.len()).sum();
        assert_eq!(n, 2 * 3 * 3 * 64 * 64 + 4 * 64);
    }

    #[test]
    fn projection_block_downsamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut block = BasicBlock::<f32>::new("b", 4, 8, 2, &mut rng);
        let y = block.forward(&Tensor::zeros(&[2, 4, 6, 6]), &mut Context::train(0)).unwrap();
        assert_eq!(y.shape(), &[2, 8, 3, 3]);
    }
}
