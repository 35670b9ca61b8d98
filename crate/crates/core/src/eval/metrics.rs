//! Accuracy statistics and composition error metrics.

use crate::error::{Error, Result};
use crate::libs::ElementComposition;

/// Mean accuracy and the 95% confidence half-width over independent runs,
/// using the normal approximation `1.96 * s / sqrt(n)` with the sample
/// standard deviation. A single run has no half-width.
pub fn accuracy_ci(accuracies: &[f64]) -> Result<(f64, Option<f64>)> {
    if accuracies.is_empty() {
        return Err(Error::EmptyClass);
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    if accuracies.len() == 1 {
        return Ok((mean, None));
    }
    let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, Some(1.96 * var.sqrt() / n.sqrt())))
}

/// Mean absolute error between two compositions over the union of elements
/// present in either.
pub fn composition_mae(pred: &ElementComposition, truth: &ElementComposition) -> f64 {
    let mut union: Vec<&str> = pred.elements().chain(truth.elements()).collect();
    union.sort_unstable();
    union.dedup();
    if union.is_empty() {
        return 0.0;
    }
    let total: f64 =
        union.iter().map(|e| (pred.fraction(e) - truth.fraction(e)).abs()).sum();
    total / union.len() as f64
}
