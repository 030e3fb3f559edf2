use rand_chacha::ChaCha8Rng;

use super::{kaiming_bound, uniform_tensor, Context, Layer, LayerKind, Mode};
use crate::error::{NnError, Result};
use crate::scalar::{gemm, MatMut, MatRef, Scalar};
use crate::tensor::{Param, Tensor};

/// Fully connected layer, `y = x W^T + b` with `W` of shape `[out, in]`.
#[derive(Debug)]
pub struct Linear<T> {
    in_features: usize,
    out_features: usize,
    weight: Param<T>,
    bias: Option<Param<T>>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, in_features: usize, out_features: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let weight = uniform_tensor(&[out_features, in_features], kaiming_bound(in_features), rng);
        let bias = bias.then(|| {
            let b = uniform_tensor(&[out_features], 1.0 / (in_features as f64).sqrt(), rng);
            Param::new(format!("{name}.bias"), b)
        });
        Self {
            in_features,
            out_features,
            weight: Param::new(format!("{name}.weight"), weight),
            bias,
            input: None,
        }
    }

    pub fn weight(&self) -> &Param<T> {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Param<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> Option<&mut Param<T>> {
        self.bias.as_mut()
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Linear
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        input.expect_rank(2, "linear forward")?;
        let batch = input.batch();
        if input.shape()[1] != self.in_features {
            return Err(NnError::shape("linear forward", &[batch, self.in_features], input.shape()));
        }
        let mut out = Tensor::zeros(&[batch, self.out_features]);
        if let Some(b) = &self.bias {
            for row in out.data_mut().chunks_exact_mut(self.out_features) {
                row.copy_from_slice(b.value.data());
            }
        }
        let beta = if self.bias.is_some() { T::one() } else { T::zero() };
        gemm(
            T::one(),
            MatRef::new(input.data(), batch, self.in_features),
            MatRef::new(self.weight.value.data(), self.out_features, self.in_features).t(),
            beta,
            MatMut::new(out.data_mut(), batch, self.out_features),
        );
        if ctx.mode == Mode::Train {
            self.input = Some(input.clone());
        }
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.input.as_ref().ok_or(NnError::BackwardBeforeForward("linear"))?;
        let batch = input.batch();
        if grad_output.shape() != [batch, self.out_features] {
            return Err(NnError::shape("linear backward", &[batch, self.out_features], grad_output.shape()));
        }
        let dy = MatRef::new(grad_output.data(), batch, self.out_features);
        gemm(
            T::one(),
            dy.t(),
            MatRef::new(input.data(), batch, self.in_features),
            T::one(),
            MatMut::new(self.weight.grad.data_mut(), self.out_features, self.in_features),
        );
        if let Some(b) = &mut self.bias {
            let gb = b.grad.data_mut();
            for row in grad_output.data().chunks_exact(self.out_features) {
                for (g, &v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        let mut dx = Tensor::zeros(&[batch, self.in_features]);
        gemm(
            T::one(),
            dy,
            MatRef::new(self.weight.value.data(), self.out_features, self.in_features),
            T::zero(),
            MatMut::new(dx.data_mut(), batch, self.in_features),
        );
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != [self.in_features] {
            return Err(NnError::shape("linear", &[self.in_features], input));
        }
        Ok(vec![self.out_features])
    }
}

/// Collapses every non-batch dimension.
#[derive(Debug, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Flatten {
    fn kind(&self) -> LayerKind {
        LayerKind::Flatten
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let batch = input.batch();
        let features = input.shape()[1..].iter().product();
        self.input_shape = Some(input.shape().to_vec());
        input.clone().reshape(&[batch, features])
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.as_ref().ok_or(NnError::BackwardBeforeForward("flatten"))?;
        grad_output.clone().reshape(shape)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![input.iter().product()])
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn identity_weights_pass_gradient_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = Linear::<f64>::new("fc", 3, 3, true, &mut rng);
        let eye = Tensor::from_vec(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        lin.weight.value = eye;
        lin.bias.as_mut().unwrap().value.fill(0.0);
        let x = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let y = lin.forward(&x, &mut Context::train(0)).unwrap();
        assert_eq!(y, x);
        let g = Tensor::from_vec(&[2, 3], vec![0.5, -1., 2., 3., 0., -4.]).unwrap();
        assert_eq!(lin.backward(&g).unwrap(), g);
    }

    #[test]
    fn ten_to_two_has_22_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::<f32>::new("fc", 10, 2, true, &mut rng);
        let n: usize = Layer::params(&lin).iter().map(|p| p.len()).sum();
        assert_eq!(n, 22);
    }
}
