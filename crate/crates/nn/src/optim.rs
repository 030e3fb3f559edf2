//! Adam with L2-style weight decay, and the per-epoch learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Param;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Learning rate per epoch: constant, or linear decay `lr0 * (1 - epoch / total)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_epochs: usize,
    pub linear: bool,
}

impl LrSchedule {
    pub fn constant(base_lr: f64, total_epochs: usize) -> Self {
        Self { base_lr, total_epochs, linear: false }
    }

    pub fn linear(base_lr: f64, total_epochs: usize) -> Self {
        Self { base_lr, total_epochs, linear: true }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if !self.linear || self.total_epochs == 0 {
            return self.base_lr;
        }
        let e = epoch.min(self.total_epochs) as f64;
        self.base_lr * (1.0 - e / self.total_epochs as f64)
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, weight_decay, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. The decay term `wd * theta` is added to the
    /// gradient before the moment updates.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(NnError::shape("adam parameter list", &[self.first.len()], &[params.len()]));
        }
        for (m, p) in self.first.iter().zip(params.iter()) {
            if m.len() != p.len() || p.grad.len() != p.len() {
                return Err(NnError::shape(format!("adam state for {}", p.name), &[m.len()], &[p.len()]));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
        let (one_b1, one_b2) = (T::lit(1.0 - BETA1), T::lit(1.0 - BETA2));
        let step_size = T::lit(self.lr / bc1);
        let inv_sqrt_bc2 = T::lit(1.0 / bc2.sqrt());
        let eps = T::lit(EPSILON);
        let wd = T::lit(self.weight_decay);
        let decay = self.weight_decay != 0.0;
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grads = p.grad.data().to_vec();
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let mut g = grads[i];
                if decay {
                    g += wd * values[i];
                }
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                let denom = v[i].sqrt() * inv_sqrt_bc2 + eps;
                values[i] -= step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}
