use crate::Scalar;

/// Prediction clamp applied before the logarithms of [`cross_entropy`].
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    CrossEntropy,
    Mse,
}

impl Loss {
    pub fn eval<S: Scalar>(self, predictions: &[S], targets: &[S]) -> (f64, Vec<S>) {
        match self {
            Loss::CrossEntropy => cross_entropy(predictions, targets),
            Loss::Mse => mse(predictions, targets),
        }
    }
}

/// Mean binary cross-entropy over all entries, and its gradient with respect
/// to the predictions. Predictions are clamped to
/// `[PROB_CLAMP, 1 - PROB_CLAMP]` and the gradient is taken at the clamped
/// value.
pub fn cross_entropy<S: Scalar>(predictions: &[S], targets: &[S]) -> (f64, Vec<S>) {
    assert_eq!(predictions.len(), targets.len());
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.to_f64_lossy().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let t = t.to_f64_lossy();
            loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
            S::lit((-t / p + (1.0 - t) / (1.0 - p)) / n)
        })
        .collect();
    (loss / n, grad)
}

/// Mean squared error and its gradient.
pub fn mse<S: Scalar>(predictions: &[S], targets: &[S]) -> (f64, Vec<S>) {
    assert_eq!(predictions.len(), targets.len());
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let d = p.to_f64_lossy() - t.to_f64_lossy();
            loss += d * d;
            S::lit(2.0 * d / n)
        })
        .collect();
    (loss / n, grad)
}
