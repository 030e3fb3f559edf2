use std::collections::hash_map::DefaultHasher;
use std::hash::Hash;

use super::{Context, Layer, LayerKind, Mode};
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Default)]
pub struct Relu<T> {
    mask: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T> Relu<T> {
    pub fn new() -> Self {
        Self { mask: None, _marker: std::marker::PhantomData }
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Relu
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        let mut out = input.clone();
        let zero = T::zero();
        if ctx.mode == Mode::Train {
            let mask: Vec<bool> = input.data().iter().map(|&v| v > zero).collect();
            for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
                if !m {
                    *o = zero;
                }
            }
            self.mask = Some(mask);
        } else {
            out.data_mut().iter_mut().for_each(|v| {
                if *v <= zero {
                    *v = zero
                }
            });
        }
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or(NnError::BackwardBeforeForward("relu"))?;
        if mask.len() != grad_output.len() {
            return Err(NnError::shape("relu backward", &[mask.len()], &[grad_output.len()]));
        }
        let mut grad = grad_output.clone();
        for (g, &m) in grad.data_mut().iter_mut().zip(mask) {
            if !m {
                *g = T::zero();
            }
        }
        Ok(grad)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn activation_pattern(&self, state: &mut DefaultHasher) {
        self.mask.hash(state);
    }
}
