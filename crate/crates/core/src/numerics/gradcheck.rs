//! Central finite differences, used as the independent oracle for the
//! hand-written backpropagation.

use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`: `(f(x+eps e_i) - f(x-eps e_i)) / (2 eps)`.
pub fn finite_diff_grad(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let original = point[i];
        point[i] = original + eps;
        let plus = f(&point);
        point[i] = original - eps;
        let minus = f(&point);
        point[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteEvaluation { coordinate: i });
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}
