//! Task loss and the composite objective coupling it to the Bingham term.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub const DEFAULT_DELTA: f64 = 0.8;
/// Weight of the task loss inside the penalty.
pub const TASK_COUPLING: f64 = 0.1;
/// Smoothing of `|x|` as `sqrt(x² + ε²) - ε`.
pub const ABS_SMOOTHING: f64 = 1e-12;

fn smooth_abs(x: f64) -> f64 {
    (x * x + ABS_SMOOTHING * ABS_SMOOTHING).sqrt() - ABS_SMOOTHING
}

fn smooth_sign(x: f64) -> f64 {
    x / (x * x + ABS_SMOOTHING * ABS_SMOOTHING).sqrt()
}

/// `L_task + δ · |L_bingham - 0.1 · L_task|`.
pub fn total_loss(task_loss: f64, bingham_loss: f64, delta: f64) -> f64 {
    task_loss + delta * smooth_abs(bingham_loss - TASK_COUPLING * task_loss)
}

/// `(∂L/∂L_task, ∂L/∂L_bingham)`.
pub fn total_loss_grad(task_loss: f64, bingham_loss: f64, delta: f64) -> (f64, f64) {
    let s = smooth_sign(bingham_loss - TASK_COUPLING * task_loss);
    (1.0 - delta * TASK_COUPLING * s, delta * s)
}

/// Mean softmax cross-entropy of `logits` (`N × C`) against integer labels, with its
/// gradient with respect to the logits, and the number of correct argmax predictions.
pub fn cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DMatrix<f64>, usize)> {
    let (n, c) = logits.shape();
    if labels.len() != n || n == 0 {
        return Err(Error::InvalidArgument(format!("{} labels for {n} logit rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = DMatrix::zeros(n, c);
    let mut loss = 0.0;
    let mut correct = 0;
    for (i, &label) in labels.iter().enumerate() {
        let row: DVector<f64> = logits.row(i).transpose();
        let m = row.max();
        let e = row.map(|z| (z - m).exp());
        let z = e.sum();
        loss += z.ln() + m - row[label];
        let mut best = 0;
        for j in 0..c {
            grad[(i, j)] = e[j] / z / n as f64;
            if row[j] > row[best] {
                best = j;
            }
        }
        grad[(i, label)] -= 1.0 / n as f64;
        correct += usize::from(best == label);
    }
    Ok((loss / n as f64, grad, correct))
}
