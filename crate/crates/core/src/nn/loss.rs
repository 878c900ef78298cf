use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Weighted cross-entropy of one sample.
///
/// `loss = -w[label] * ln softmax(logits)[label]` and the gradient with
/// respect to the logits is `w[label] * (softmax(logits) - onehot(label))`.
pub fn softmax_cross_entropy(
    logits: &[f64],
    label: usize,
    class_weights: (f64, f64),
) -> Result<(f64, Vec<f64>)> {
    if logits.len() != 2 {
        return Err(Error::invalid(format!("expected 2 logits, got {}", logits.len())));
    }
    if label >= logits.len() {
        return Err(Error::invalid(format!("label {label} out of range")));
    }
    let weight = if label == 0 { class_weights.0 } else { class_weights.1 };
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = -weight * (logits[label] - log_sum);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    grad.iter_mut().for_each(|g| *g *= weight);
    Ok((loss, grad))
}

/// `w_i = 1 / f_i` with `f_i = count_i / total`.
pub fn class_weights_from_frequencies(counts: (usize, usize)) -> Result<(f64, f64)> {
    if counts.0 == 0 || counts.1 == 0 {
        return Err(Error::invalid(format!(
            "both classes need at least one sample, got {counts:?}"
        )));
    }
    let total = (counts.0 + counts.1) as f64;
    Ok((total / counts.0 as f64, total / counts.1 as f64))
}
