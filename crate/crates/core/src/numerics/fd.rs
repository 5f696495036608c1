use crate::error::{CceError, Result};

use super::vector::Vector;

/// Central-difference gradient `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &Vector, h: f64) -> Result<Vector>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(CceError::invalid(format!("step must be positive, got {h}")));
    }
    let mut probe = x.as_slice().to_vec();
    let mut grad = Vec::with_capacity(x.dim());
    for j in 0..x.dim() {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = f(&probe)?;
        probe[j] = orig - h;
        let down = f(&probe)?;
        probe[j] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Vector::checked(grad, 0, "finite-difference gradient")
}
