use crate::concept_bank::ConceptBank;
use crate::error::{CceError, Result};
use crate::numerics::Vector;

/// Per-concept box `[w_min, w_max]` on the counterfactual weights, with
/// `w_min <= 0 <= w_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityBounds {
    pub w_min: Vector,
    pub w_max: Vector,
}

impl ValidityBounds {
    pub fn new(w_min: Vector, w_max: Vector) -> Result<Self> {
        if w_min.dim() != w_max.dim() {
            return Err(CceError::invalid("bound vectors differ in length"));
        }
        if w_min.iter().any(|&x| x > 0.0) || w_max.iter().any(|&x| x < 0.0) {
            return Err(CceError::invalid("bounds must satisfy w_min <= 0 <= w_max"));
        }
        Ok(ValidityBounds { w_min, w_max })
    }

    /// No movement allowed in any concept.
    pub fn zeros(n: usize) -> Self {
        ValidityBounds {
            w_min: Vector::zeros(n),
            w_max: Vector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.w_min.dim()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.len()
            && w
                .iter()
                .zip(self.w_min.iter().zip(self.w_max.iter()))
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    /// Entrywise mean of several samples' bounds.
    pub fn mean(all: &[ValidityBounds]) -> Result<Self> {
        let first = all
            .first()
            .ok_or_else(|| CceError::invalid("no bounds to average"))?;
        let n = first.len();
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for b in all {
            if b.len() != n {
                return Err(CceError::invalid("bound vectors differ in length"));
            }
            for i in 0..n {
                lo[i] += b.w_min[i];
                hi[i] += b.w_max[i];
            }
        }
        let k = all.len() as f64;
        ValidityBounds::new(
            Vector::new(lo.into_iter().map(|x| x / k).collect())?,
            Vector::new(hi.into_iter().map(|x| x / k).collect())?,
        )
    }
}

/// How far each concept may be added or removed at `e`.
///
/// With `s_i` the concept score, `w_max_i = max(0, pos_score_max_i - s_i)`
/// and `w_min_i = min(0, neg_score_min_i - s_i)`: a concept already scoring
/// like the strongest training positive cannot be added, and one scoring
/// like the weakest negative cannot be removed.
pub fn validity_bounds(e: &Vector, bank: &ConceptBank) -> Result<ValidityBounds> {
    if bank.is_empty() {
        return Err(CceError::EmptyBank);
    }
    if e.dim() != bank.dim() {
        return Err(CceError::invalid(format!(
            "embedding has dimension {}, bank expects {}",
            e.dim(),
            bank.dim()
        )));
    }
    let mut lo = Vec::with_capacity(bank.len());
    let mut hi = Vec::with_capacity(bank.len());
    for c in bank.concepts() {
        let s = c.score_slice(e.as_slice());
        lo.push((c.neg_score_min - s).min(0.0));
        hi.push((c.pos_score_max - s).max(0.0));
    }
    Ok(ValidityBounds {
        w_min: Vector::checked(lo, 0, "lower bound")?,
        w_max: Vector::checked(hi, 0, "upper bound")?,
    })
}
