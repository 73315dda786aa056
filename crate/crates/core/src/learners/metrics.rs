use crate::linalg::{Matrix, Vector};

use super::LearnerError;

fn same_len(a: &Vector, b: &Vector) -> Result<(), LearnerError> {
    if a.len() != b.len() {
        return Err(LearnerError::LengthMismatch {
            expected: b.len(),
            found: a.len(),
        });
    }
    Ok(())
}

/// `Xw + b`.
pub fn predict_scores(x: &Matrix, w: &Vector, intercept: f64) -> Result<Vector, LearnerError> {
    if x.ncols() != w.len() {
        return Err(LearnerError::LengthMismatch {
            expected: x.ncols(),
            found: w.len(),
        });
    }
    let mut s = x * w;
    s.add_scalar_mut(intercept);
    Ok(s)
}

/// Sign with ties going to +1.
pub fn classify(scores: &Vector) -> Vector {
    scores.map(|s| if s >= 0.0 { 1.0 } else { -1.0 })
}

pub fn accuracy(pred: &Vector, y: &Vector) -> Result<f64, LearnerError> {
    same_len(pred, y)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let hits = pred.iter().zip(y.iter()).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / y.len() as f64)
}

pub fn mean_absolute_error(pred: &Vector, y: &Vector) -> Result<f64, LearnerError> {
    same_len(pred, y)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(y.iter()).map(|(p, t)| (p - t).abs()).sum::<f64>() / y.len() as f64)
}

/// Accuracy of always predicting the more frequent of ±1.
pub fn majority_baseline(y: &Vector) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    pos.max(y.len() - pos) as f64 / y.len() as f64
}
