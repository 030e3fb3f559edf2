use rand_chacha::ChaCha8Rng;

use super::{kaiming_bound, uniform_tensor, Context, Layer, LayerKind, Mode};
use crate::error::{NnError, Result};
use crate::scalar::{gemm, MatMut, MatRef, Scalar};
use crate::tensor::{Param, Tensor};

/// 2-D cross-correlation (no kernel flip) with zero padding, computed as
/// one GEMM over an im2col matrix spanning the whole batch.
#[derive(Debug)]
pub struct Conv2d<T> {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    weight: Param<T>,
    bias: Option<Param<T>>,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug)]
struct ConvCache<T> {
    input_shape: [usize; 4],
    out_hw: (usize, usize),
    cols: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(stride >= 1, "conv stride must be >= 1");
        let fan_in = in_channels * kernel * kernel;
        let weight = uniform_tensor(&[out_channels, in_channels, kernel, kernel], kaiming_bound(fan_in), rng);
        let bias = bias.then(|| {
            Param::new(format!("{name}.bias"), uniform_tensor(&[out_channels], 1.0 / (fan_in as f64).sqrt(), rng))
        });
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(format!("{name}.weight"), weight),
            bias,
            cache: None,
        }
    }

    fn out_dim(&self, n: usize) -> Result<usize> {
        let padded = n + 2 * self.padding;
        if padded < self.kernel {
            return Err(NnError::shape("conv2d spatial", &[self.kernel], &[padded]));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Row `(ci, ky, kx)`, column `n * P + oy * ow + ox`.
    fn im2col(&self, x: &[T], shape: [usize; 4], oh: usize, ow: usize) -> Vec<T> {
        let [b, c, h, w] = shape;
        let p = oh * ow;
        let ncols = b * p;
        let mut cols = vec![T::zero(); self.patch_len() * ncols];
        let pad = self.padding as isize;
        for ci in 0..c {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (ci * self.kernel + ky) * self.kernel + kx;
                    let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                    for n in 0..b {
                        let src = &x[(n * c + ci) * h * w..(n * c + ci + 1) * h * w];
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                            let dst = &mut dst_row[n * p + oy * ow..n * p + (oy + 1) * ow];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - pad;
                                if ix >= 0 && ix < w as isize {
                                    *d = src_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], shape: [usize; 4], oh: usize, ow: usize) -> Vec<T> {
        let [b, c, h, w] = shape;
        let p = oh * ow;
        let ncols = b * p;
        let mut dx = vec![T::zero(); b * c * h * w];
        let pad = self.padding as isize;
        for ci in 0..c {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (ci * self.kernel + ky) * self.kernel + kx;
                    let src_row = &cols[row * ncols..(row + 1) * ncols];
                    for n in 0..b {
                        let dst = &mut dx[(n * c + ci) * h * w..(n * c + ci + 1) * h * w];
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kx) as isize - pad;
                                if ix >= 0 && ix < w as isize {
                                    dst[iy as usize * w + ix as usize] += src_row[n * p + oy * ow + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Conv2d
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        input.expect_rank(4, "conv2d forward")?;
        let s = input.shape();
        let shape = [s[0], s[1], s[2], s[3]];
        if shape[1] != self.in_channels {
            return Err(NnError::shape("conv2d input channels", &[self.in_channels], &[shape[1]]));
        }
        let (oh, ow) = (self.out_dim(shape[2])?, self.out_dim(shape[3])?);
        let b = shape[0];
        let p = oh * ow;
        let cols = self.im2col(input.data(), shape, oh, ow);

        // [Cout, K] x [K, B*P] -> [Cout, B*P]
        let mut tmp = vec![T::zero(); self.out_channels * b * p];
        gemm(
            T::one(),
            MatRef::new(self.weight.value.data(), self.out_channels, self.patch_len()),
            MatRef::new(&cols, self.patch_len(), b * p),
            T::zero(),
            MatMut::new(&mut tmp, self.out_channels, b * p),
        );
        let mut out = Tensor::zeros(&[b, self.out_channels, oh, ow]);
        let o = out.data_mut();
        for co in 0..self.out_channels {
            let bias = self.bias.as_ref().map_or(T::zero(), |bb| bb.value.data()[co]);
            for n in 0..b {
                let src = &tmp[co * b * p + n * p..co * b * p + (n + 1) * p];
                let dst = &mut o[(n * self.out_channels + co) * p..(n * self.out_channels + co + 1) * p];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = v + bias;
                }
            }
        }
        if ctx.mode == Mode::Train {
            self.cache = Some(ConvCache { input_shape: shape, out_hw: (oh, ow), cols });
        }
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(NnError::BackwardBeforeForward("conv2d"))?;
        let b = cache.input_shape[0];
        let (oh, ow) = cache.out_hw;
        let p = oh * ow;
        let expected = [b, self.out_channels, oh, ow];
        if grad_output.shape() != expected {
            return Err(NnError::shape("conv2d backward", &expected, grad_output.shape()));
        }
        // regroup dY as [Cout, B*P]
        let mut dy = vec![T::zero(); self.out_channels * b * p];
        let g = grad_output.data();
        for n in 0..b {
            for co in 0..self.out_channels {
                let src = &g[(n * self.out_channels + co) * p..(n * self.out_channels + co + 1) * p];
                dy[co * b * p + n * p..co * b * p + (n + 1) * p].copy_from_slice(src);
            }
        }
        if let Some(bias) = &mut self.bias {
            for (co, gb) in bias.grad.data_mut().iter_mut().enumerate() {
                *gb += dy[co * b * p..(co + 1) * b * p].iter().copied().sum::<T>();
            }
        }
        let k = self.patch_len();
        let dy_mat = MatRef::new(&dy, self.out_channels, b * p);
        gemm(
            T::one(),
            dy_mat,
            MatRef::new(&cache.cols, k, b * p).t(),
            T::one(),
            MatMut::new(self.weight.grad.data_mut(), self.out_channels, k),
        );
        let mut dcols = vec![T::zero(); k * b * p];
        gemm(
            T::one(),
            MatRef::new(self.weight.value.data(), self.out_channels, k).t(),
            dy_mat,
            T::zero(),
            MatMut::new(&mut dcols, k, b * p),
        );
        let dx = self.col2im(&dcols, cache.input_shape, oh, ow);
        Tensor::from_vec(&cache.input_shape, dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 || input[0] != self.in_channels {
            return Err(NnError::shape("conv2d", &[self.in_channels, 0, 0], input));
        }
        Ok(vec![self.out_channels, self.out_dim(input[1])?, self.out_dim(input[2])?])
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], bias: &[f64], shape: [usize; 4], cout: usize, k: usize, s: usize, pad: usize) -> Vec<f64> {
        let [b, c, h, wd] = shape;
        let oh = (h + 2 * pad - k) / s + 1;
        let ow = (wd + 2 * pad - k) / s + 1;
        let mut out = vec![0.0; b * cout * oh * ow];
        for n in 0..b {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - pad as isize;
                                    let ix = (ox * s + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += w[((co * c + ci) * k + ky) * k + kx]
                                        * x[((n * c + ci) * h + iy as usize) * wd + ix as usize];
                                }
                            }
                        }
                        out[((n * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn lenet_first_conv_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::<f32>::new("c1", 1, 12, 5, 1, 0, true, &mut rng);
        let y = conv.forward(&Tensor::zeros(&[2, 1, 24, 24]), &mut Context::eval()).unwrap();
        assert_eq!(y.shape(), &[2, 12, 20, 20]);
    }

    #[test]
    fn strided_padded_conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = [2, 3, 7, 6];
        let x: Vec<f64> = (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut conv = Conv2d::<f64>::new("c", 3, 4, 3, 2, 1, true, &mut rng);
        let y = conv.forward(&Tensor::from_vec(&shape, x.clone()).unwrap(), &mut Context::eval()).unwrap();
        let bias = conv.bias.as_ref().unwrap().value.data().to_vec();
        let expected = naive_conv(&x, conv.weight.value.data(), &bias, shape, 4, 3, 2, 1);
        assert_eq!(y.shape(), &[2, 4, 4, 3]);
        for (a, b) in y.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
