use rand::Rng;

use super::{Context, Layer, LayerKind, Mode};
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Inverted dropout: surviving activations are scaled by `1 / (1 - rate)`,
/// so eval mode is the identity.
#[derive(Debug)]
pub struct Dropout<T> {
    rate: f64,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
        Self { rate, mask: None }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl<T: Scalar> Layer<T> for Dropout<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Dropout
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        if ctx.mode == Mode::Eval {
            return Ok(input.clone());
        }
        let keep = T::lit(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = if self.rate == 0.0 {
            vec![T::one(); input.len()]
        } else {
            (0..input.len())
                .map(|_| if ctx.rng.gen::<f64>() < self.rate { T::zero() } else { keep })
                .collect()
        };
        let mut out = input.clone();
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        self.mask = Some(mask);
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or(NnError::BackwardBeforeForward("dropout"))?;
        if mask.len() != grad_output.len() {
            return Err(NnError::shape("dropout backward", &[mask.len()], &[grad_output.len()]));
        }
        let mut grad = grad_output.clone();
        for (g, &m) in grad.data_mut().iter_mut().zip(mask) {
            *g *= m;
        }
        Ok(grad)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_mode_is_identity() {
        let mut d = Dropout::<f64>::new(0.5);
        let x = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(d.forward(&x, &mut Context::eval()).unwrap(), x);
    }

    #[test]
    fn train_mode_preserves_expectation() {
        let mut d = Dropout::<f64>::new(0.3);
        let x = Tensor::full(&[1, 200_000], 1.0);
        let y = d.forward(&x, &mut Context::train(9)).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }
}
