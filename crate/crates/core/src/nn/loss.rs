use crate::error::{Error, Result};

/// Numerically stable softmax of one row.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy of `B × C` logits against class indices, and its
/// gradient `(softmax − onehot) / B`.
pub fn softmax_xent(logits: &[f64], classes: usize, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let b = labels.len();
    if b == 0 || logits.len() != b * classes {
        return Err(Error::InvalidInput(format!(
            "{} logits for {b} labels of {classes} classes",
            logits.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidInput(format!("label {bad} out of range")));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for (c, v) in row.iter().enumerate() {
            let p = (v - lse).exp();
            grad.push((p - if c == y { 1.0 } else { 0.0 }) / b as f64);
        }
    }
    Ok((loss / b as f64, grad))
}
