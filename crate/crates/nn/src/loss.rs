use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-wise softmax of `[B, C]` logits.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    logits.expect_rank(2, "softmax")?;
    let classes = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Output of the fused softmax + cross-entropy.
#[derive(Clone, Debug)]
pub struct CrossEntropy<T> {
    /// Mean loss over the batch.
    pub loss: T,
    pub probs: Tensor<T>,
    /// d(mean loss)/d(logits).
    pub grad: Tensor<T>,
}

pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<CrossEntropy<T>> {
    logits.expect_rank(2, "softmax_cross_entropy")?;
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch {
        return Err(NnError::shape("softmax_cross_entropy labels", &[batch], &[labels.len()]));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::shape("softmax_cross_entropy label range", &[classes], &[bad]));
    }
    let probs = softmax(logits)?;
    let inv_b = T::one() / T::from_usize_lossy(batch.max(1));
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (n, &label) in labels.iter().enumerate() {
        let row = &logits.data()[n * classes..(n + 1) * classes];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - row[label];
        grad.data_mut()[n * classes + label] -= T::one();
    }
    grad.data_mut().iter_mut().for_each(|g| *g *= inv_b);
    Ok(CrossEntropy { loss: loss * inv_b, probs, grad })
}

/// Argmax per row; exact ties resolve to the lowest class index.
pub fn predict<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let classes = logits.shape()[1];
    logits
        .data()
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
