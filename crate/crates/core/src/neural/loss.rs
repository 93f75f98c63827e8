use crate::error::{Error, Result};

/// Log-probabilities of a softmax restricted to `valid` entries; masked
/// entries get `-inf`.
pub fn log_softmax_masked(logits: &[f64], valid: &[bool]) -> Vec<f64> {
    let m = logits
        .iter()
        .zip(valid)
        .filter(|(_, v)| **v)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits
        .iter()
        .zip(valid)
        .filter(|(_, v)| **v)
        .map(|(x, _)| (x - m).exp())
        .sum();
    let lz = m + z.ln();
    logits
        .iter()
        .zip(valid)
        .map(|(x, v)| if *v { x - lz } else { f64::NEG_INFINITY })
        .collect()
}

/// Negative log-likelihood of `target` and its gradient `p - onehot` with
/// respect to the logits (zero on masked entries).
pub fn softmax_xent(logits: &[f64], valid: &[bool], target: usize) -> Result<(f64, Vec<f64>)> {
    if !valid.get(target).copied().unwrap_or(false) {
        return Err(Error::MaskedTarget(target));
    }
    let lp = log_softmax_masked(logits, valid);
    let mut grad: Vec<f64> = lp.iter().map(|l| if l.is_finite() { l.exp() } else { 0.0 }).collect();
    grad[target] -= 1.0;
    Ok((-lp[target], grad))
}
