use rand_chacha::ChaCha8Rng;

use super::{uniform_tensor, Context, Layer, LayerKind, Mode};
use crate::error::{NnError, Result};
use crate::scalar::{gemm, MatMut, MatRef, Scalar};
use crate::tensor::{Param, Tensor};

/// Single-layer LSTM returning the final hidden state.
///
/// Input is `[B, T, I]`, or `[B, T]` when `I == 1`. Gate rows are ordered
/// input, forget, cell, output. Every time step is unrolled, including
/// zero-padded ones.
#[derive(Debug)]
pub struct Lstm<T> {
    input_size: usize,
    hidden: usize,
    w_ih: Param<T>,
    w_hh: Param<T>,
    bias: Param<T>,
    cache: Option<LstmCache<T>>,
}

#[derive(Debug)]
struct LstmCache<T> {
    input_shape: Vec<usize>,
    batch: usize,
    steps: usize,
    /// per step: x_t [B, I]
    xs: Vec<Vec<T>>,
    /// h_{t-1}, c_{t-1} per step, each [B, H]
    h_prev: Vec<Vec<T>>,
    c_prev: Vec<Vec<T>>,
    /// activated gates per step, [B, 4H]
    gates: Vec<Vec<T>>,
    /// tanh(c_t) per step
    tanh_c: Vec<Vec<T>>,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Scalar> Lstm<T> {
    pub fn new(name: &str, input_size: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            input_size,
            hidden,
            w_ih: Param::new(format!("{name}.weight_ih"), uniform_tensor(&[4 * hidden, input_size], bound, rng)),
            w_hh: Param::new(format!("{name}.weight_hh"), uniform_tensor(&[4 * hidden, hidden], bound, rng)),
            bias: Param::new(format!("{name}.bias"), uniform_tensor(&[4 * hidden], bound, rng)),
            cache: None,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn split_input(&self, input: &Tensor<T>) -> Result<(usize, usize)> {
        let s = input.shape();
        match s.len() {
            2 if self.input_size == 1 => Ok((s[0], s[1])),
            3 if s[2] == self.input_size => Ok((s[0], s[1])),
            _ => Err(NnError::shape("lstm input", &[0, 0, self.input_size], s)),
        }
    }

    pub fn params_mut_named(&mut self) -> [&mut Param<T>; 3] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

impl<T: Scalar> Layer<T> for Lstm<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Lstm
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        let (b, steps) = self.split_input(input)?;
        let (h_sz, i_sz) = (self.hidden, self.input_size);
        let g_sz = 4 * h_sz;
        let mut h = vec![T::zero(); b * h_sz];
        let mut c = vec![T::zero(); b * h_sz];
        let train = ctx.mode == Mode::Train;
        let mut cache = LstmCache {
            input_shape: input.shape().to_vec(),
            batch: b,
            steps,
            xs: Vec::new(),
            h_prev: Vec::new(),
            c_prev: Vec::new(),
            gates: Vec::new(),
            tanh_c: Vec::new(),
        };
        let x = input.data();
        let mut xt = vec![T::zero(); b * i_sz];
        for t in 0..steps {
            for n in 0..b {
                let src = &x[(n * steps + t) * i_sz..(n * steps + t + 1) * i_sz];
                xt[n * i_sz..(n + 1) * i_sz].copy_from_slice(src);
            }
            let mut z = vec![T::zero(); b * g_sz];
            for row in z.chunks_exact_mut(g_sz) {
                row.copy_from_slice(self.bias.value.data());
            }
            gemm(
                T::one(),
                MatRef::new(&xt, b, i_sz),
                MatRef::new(self.w_ih.value.data(), g_sz, i_sz).t(),
                T::one(),
                MatMut::new(&mut z, b, g_sz),
            );
            gemm(
                T::one(),
                MatRef::new(&h, b, h_sz),
                MatRef::new(self.w_hh.value.data(), g_sz, h_sz).t(),
                T::one(),
                MatMut::new(&mut z, b, g_sz),
            );
            let mut c_next = vec![T::zero(); b * h_sz];
            let mut h_next = vec![T::zero(); b * h_sz];
            let mut tc = vec![T::zero(); b * h_sz];
            for n in 0..b {
                let zr = &mut z[n * g_sz..(n + 1) * g_sz];
                for j in 0..h_sz {
                    let i = sigmoid(zr[j]);
                    let f = sigmoid(zr[h_sz + j]);
                    let g = zr[2 * h_sz + j].tanh();
                    let o = sigmoid(zr[3 * h_sz + j]);
                    zr[j] = i;
                    zr[h_sz + j] = f;
                    zr[2 * h_sz + j] = g;
                    zr[3 * h_sz + j] = o;
                    let k = n * h_sz + j;
                    c_next[k] = f * c[k] + i * g;
                    tc[k] = c_next[k].tanh();
                    h_next[k] = o * tc[k];
                }
            }
            if train {
                cache.xs.push(xt.clone());
                cache.h_prev.push(std::mem::replace(&mut h, h_next));
                cache.c_prev.push(std::mem::replace(&mut c, c_next));
                cache.gates.push(z);
                cache.tanh_c.push(tc);
            } else {
                h = h_next;
                c = c_next;
            }
        }
        if train {
            self.cache = Some(cache);
        }
        Tensor::from_vec(&[b, h_sz], h)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(NnError::BackwardBeforeForward("lstm"))?;
        let (b, steps) = (cache.batch, cache.steps);
        let (h_sz, i_sz) = (self.hidden, self.input_size);
        let g_sz = 4 * h_sz;
        if grad_output.shape() != [b, h_sz] {
            return Err(NnError::shape("lstm backward", &[b, h_sz], grad_output.shape()));
        }
        let mut dh = grad_output.data().to_vec();
        let mut dc = vec![T::zero(); b * h_sz];
        let mut dx = vec![T::zero(); b * steps * i_sz];
        let mut dz = vec![T::zero(); b * g_sz];
        let mut dxt = vec![T::zero(); b * i_sz];
        let one = T::one();
        for t in (0..steps).rev() {
            let gates = &cache.gates[t];
            let tc = &cache.tanh_c[t];
            let c_prev = &cache.c_prev[t];
            for n in 0..b {
                for j in 0..h_sz {
                    let k = n * h_sz + j;
                    let gi = n * g_sz;
                    let (i, f, g, o) = (gates[gi + j], gates[gi + h_sz + j], gates[gi + 2 * h_sz + j], gates[gi + 3 * h_sz + j]);
                    let d_o = dh[k] * tc[k];
                    let dct = dc[k] + dh[k] * o * (one - tc[k] * tc[k]);
                    let di = dct * g;
                    let dg = dct * i;
                    let df = dct * c_prev[k];
                    dc[k] = dct * f;
                    dz[gi + j] = di * i * (one - i);
                    dz[gi + h_sz + j] = df * f * (one - f);
                    dz[gi + 2 * h_sz + j] = dg * (one - g * g);
                    dz[gi + 3 * h_sz + j] = d_o * o * (one - o);
                }
            }
            let dz_mat = MatRef::new(&dz, b, g_sz);
            gemm(
                one,
                dz_mat.t(),
                MatRef::new(&cache.xs[t], b, i_sz),
                one,
                MatMut::new(self.w_ih.grad.data_mut(), g_sz, i_sz),
            );
            gemm(
                one,
                dz_mat.t(),
                MatRef::new(&cache.h_prev[t], b, h_sz),
                one,
                MatMut::new(self.w_hh.grad.data_mut(), g_sz, h_sz),
            );
            for row in dz.chunks_exact(g_sz) {
                for (gb, &v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                    *gb += v;
                }
            }
            gemm(
                one,
                dz_mat,
                MatRef::new(self.w_ih.value.data(), g_sz, i_sz),
                T::zero(),
                MatMut::new(&mut dxt, b, i_sz),
            );
            for n in 0..b {
                dx[(n * steps + t) * i_sz..(n * steps + t + 1) * i_sz].copy_from_slice(&dxt[n * i_sz..(n + 1) * i_sz]);
            }
            gemm(
                one,
                dz_mat,
                MatRef::new(self.w_hh.value.data(), g_sz, h_sz),
                T::zero(),
                MatMut::new(&mut dh, b, h_sz),
            );
        }
        Tensor::from_vec(&cache.input_shape, dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w_ih, &self.w_hh, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }

    fn output_shape(&self, _input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![self.hidden])
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn accepts_scalar_series_and_returns_final_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lstm = Lstm::<f64>::new("lstm", 1, 8, &mut rng);
        let x = Tensor::zeros(&[3, 126]);
        let y = lstm.forward(&x, &mut Context::eval()).unwrap();
        assert_eq!(y.shape(), &[3, 8]);
        // identical rows in, identical rows out
        assert_eq!(y.data()[..8], y.data()[8..16]);
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut lstm = Lstm::<f64>::new("lstm", 1, 4, &mut rng);
        let x = Tensor::full(&[1, 50], 10.0);
        let y = lstm.forward(&x, &mut Context::eval()).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1.0));
    }
}
