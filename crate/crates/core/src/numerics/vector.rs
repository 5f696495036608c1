use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{CceError, Result};

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(CceError::invalid("vector must have at least one entry"));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(CceError::invalid(format!(
                "vector entry {i} is not finite ({})",
                data[i]
            )));
        }
        Ok(Vector(data))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "zero-dimensional vector");
        Vector(vec![0.0; dim])
    }

    /// Wraps data already known to be finite. Debug builds check it.
    pub(crate) fn from_finite(data: Vec<f64>) -> Self {
        debug_assert!(!data.is_empty() && data.iter().all(|x| x.is_finite()));
        Vector(data)
    }

    /// Wraps the output of an arithmetic pipeline, reporting overflow.
    pub(crate) fn checked(data: Vec<f64>, step: usize, what: &str) -> Result<Self> {
        if data.iter().all(|x| x.is_finite()) {
            Ok(Vector(data))
        } else {
            Err(CceError::NumericalFailure {
                step,
                what: format!("non-finite {what}"),
            })
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_dim(other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Vector {
        Vector::from_finite(self.0.iter().map(|x| a * x).collect())
    }

    /// `self + a * x`
    pub fn add_scaled(&self, a: f64, x: &Vector) -> Result<Vector> {
        self.check_dim(x.dim())?;
        let data = self.0.iter().zip(&x.0).map(|(s, x)| s + a * x).collect();
        Vector::checked(data, 0, "vector sum")
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(CceError::invalid(format!(
                "dimension mismatch: expected {}, got {dim}",
                self.dim()
            )))
        }
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = CceError;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Vector::new(data)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Inner product with a fixed eight-lane accumulation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let lo = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    let hi = (acc[4] + acc[5]) + (acc[6] + acc[7]);
    lo + hi + tail
}

/// `y += a * x`
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
