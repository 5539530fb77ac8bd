use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { negative: 1.0, positive: 1.0 };

    /// `n_neg / n_pos` on positives, 1 on negatives.
    pub fn inverse_frequency(labels: &[u8]) -> Self {
        let pos = labels.iter().filter(|&&y| y == 1).count();
        let neg = labels.len() - pos;
        let positive = if pos == 0 { 1.0 } else { neg as f64 / pos as f64 };
        Self { negative: 1.0, positive }
    }

    #[inline]
    pub fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.positive
        } else {
            self.negative
        }
    }
}

/// Mean class-weighted binary cross-entropy over probabilities, with the
/// per-sample gradient `w(y) * (p - y)` with respect to each logit (not
/// divided by the batch size).
pub fn weighted_bce(probs: &[f64], labels: &[u8], weights: ClassWeights) -> Result<(f64, Vec<f64>)> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!("{} probs but {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::Empty("loss input"));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels) {
        let w = weights.of(y);
        let yf = y as f64;
        loss += w * -(yf * p.ln() + (1.0 - yf) * (1.0 - p).ln());
        grad.push(w * (p - yf));
    }
    Ok((loss / probs.len() as f64, grad))
}

/// Same loss evaluated stably from logits.
pub fn weighted_bce_logits(logits: &[f64], labels: &[u8], weights: ClassWeights) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        let w = weights.of(y);
        let yf = y as f64;
        // log(1 + e^z) - y z
        let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
        loss += w * (softplus - yf * z);
        grad.push(w * (sigmoid(z) - yf));
    }
    (loss / logits.len().max(1) as f64, grad)
}
