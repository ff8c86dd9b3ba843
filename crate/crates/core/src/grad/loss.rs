use crate::error::{Error, Result};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    super::tape::softmax_in_place(&mut p);
    p
}

/// Returns `(-log softmax(logits)[label], softmax(logits) - one_hot(label))`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            n_classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}
