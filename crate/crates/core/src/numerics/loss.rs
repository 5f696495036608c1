use crate::error::{CceError, Result};

use super::vector::Vector;

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_slice(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Loss and logit gradient; `label` must already be in range.
pub(crate) fn cross_entropy_slice(z: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = log_sum_exp(z) - z[label];
    let mut grad = softmax_slice(z);
    grad[label] -= 1.0;
    (loss, grad)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &Vector) -> Vector {
    Vector::from_finite(softmax_slice(logits.as_slice()))
}

/// Cross-entropy `-log softmax(logits)[label]` and its gradient with respect
/// to the logits, `softmax(logits) - onehot(label)`.
pub fn cross_entropy(logits: &Vector, label: usize) -> Result<(f64, Vector)> {
    if label >= logits.dim() {
        return Err(CceError::IndexOutOfRange {
            index: label,
            len: logits.dim(),
        });
    }
    let (loss, grad) = cross_entropy_slice(logits.as_slice(), label);
    Ok((loss, Vector::from_finite(grad)))
}
