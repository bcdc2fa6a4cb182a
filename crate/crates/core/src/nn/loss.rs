use alloc::vec::Vec;

use crate::{Error, Result};

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Derivative of relu: 1 where the input is positive, else 0.
pub fn relu_grad_mask(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(libm::exp).collect()
}

/// `-ln(probs[label])`, with the probability clamped away from zero.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs.get(label).ok_or(Error::InvalidLabel { label, n_classes: probs.len() })?;
    Ok(-libm::log(p.max(f64::MIN_POSITIVE)))
}

/// Loss and gradient w.r.t. the logits of softmax followed by cross-entropy.
/// The gradient is `softmax(z) - onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidLabel { label, n_classes: logits.len() });
    }
    let logp = log_softmax(logits);
    let loss = -logp[label];
    let grad = logp
        .iter()
        .enumerate()
        .map(|(k, &lp)| libm::exp(lp) - if k == label { 1.0 } else { 0.0 })
        .collect();
    Ok((loss, grad))
}
