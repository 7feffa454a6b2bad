/// Floor applied to probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|&v| v - lse).collect()
}

/// Negative log-likelihood of `target` and its gradient with respect to the
/// logits that produced `probs` (`probs - onehot(target)`).
pub fn cross_entropy_loss(probs: &[f64], target: usize) -> (f64, Vec<f64>) {
    assert!(target < probs.len(), "target {target} out of range");
    let loss = -probs[target].max(LOG_CLAMP).ln();
    let mut grad = probs.to_vec();
    grad[target] -= 1.0;
    (loss, grad)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, `max(z,0) - z·y + ln(1 + e^{-|z|})`.
pub fn sigmoid_bce(logit: f64, label: bool) -> (f64, f64) {
    let y = if label { 1.0 } else { 0.0 };
    let loss = logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - y)
}
