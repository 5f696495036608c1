//! Concept activation vectors: one linear max-margin classifier per concept,
//! filtered by held-out accuracy.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CceError, Result};
use crate::numerics::{axpy, dot, Matrix, RngState, Vector};

/// Default accuracy a concept classifier must reach to enter the bank.
pub const DEFAULT_ACCURACY_THRESHOLD: f64 = 0.7;
/// Default fraction of each concept's examples held out for validation.
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.25;

const UNIT_NORM_TOL: f64 = 1e-9;

/// Positive and negative embeddings for one named concept.
#[derive(Debug, Clone)]
pub struct ConceptExamples {
    pub name: String,
    pub positives: Vec<Vector>,
    pub negatives: Vec<Vector>,
}

impl ConceptExamples {
    pub fn dim(&self) -> Option<usize> {
        self.positives.first().map(Vector::dim)
    }

    fn validate(&self) -> Result<usize> {
        if self.positives.len() < 2 || self.negatives.len() < 2 {
            return Err(CceError::invalid(format!(
                "concept `{}` needs at least 2 positives and 2 negatives, got {} and {}",
                self.name,
                self.positives.len(),
                self.negatives.len()
            )));
        }
        let dim = self.positives[0].dim();
        if self
            .positives
            .iter()
            .chain(&self.negatives)
            .any(|e| e.dim() != dim)
        {
            return Err(CceError::invalid(format!(
                "concept `{}` mixes embedding dimensions",
                self.name
            )));
        }
        Ok(dim)
    }
}

/// Hinge-loss SVM solver settings (Pegasos-style primal SGD).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// L2 penalty.
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-3,
            epochs: 200,
        }
    }
}

/// A learned concept direction together with the score statistics used for
/// validity bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVector {
    pub name: String,
    /// Unit normal of the separating hyperplane, pointing towards positives.
    pub direction: Vector,
    pub intercept: f64,
    pub val_accuracy: f64,
    /// Largest signed score over the training positives.
    pub pos_score_max: f64,
    /// Smallest signed score over the training negatives.
    pub neg_score_min: f64,
}

impl ConceptVector {
    /// Signed distance to the hyperplane; positive means the concept is
    /// predicted present.
    pub fn score(&self, e: &Vector) -> Result<f64> {
        self.direction.check_dim(e.dim())?;
        Ok(self.score_slice(e.as_slice()))
    }

    pub(crate) fn score_slice(&self, e: &[f64]) -> f64 {
        dot(self.direction.as_slice(), e) + self.intercept
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(CceError::invalid(format!("concept `{}`: {what}", self.name)));
        let norm = self.direction.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return bad(format!("direction norm {norm} is not 1"));
        }
        if !(0.0..=1.0).contains(&self.val_accuracy) {
            return bad(format!("val_accuracy {} outside [0, 1]", self.val_accuracy));
        }
        if ![self.intercept, self.pos_score_max, self.neg_score_min]
            .iter()
            .all(|x| x.is_finite())
        {
            return bad("non-finite statistics".into());
        }
        if self.neg_score_min > self.pos_score_max {
            return bad("neg_score_min exceeds pos_score_max".into());
        }
        Ok(())
    }
}

/// `concept_score` as a free function.
pub fn concept_score(concept: &ConceptVector, e: &Vector) -> Result<f64> {
    concept.score(e)
}

/// Trains one concept classifier and converts it into a unit-norm CAV.
///
/// `split_fraction` of the positives and of the negatives (stratified) is
/// held out to measure `val_accuracy`; the rest trains the SVM.
pub fn learn_cav(
    examples: &ConceptExamples,
    split_fraction: f64,
    rng: &mut RngState,
    config: &SvmConfig,
) -> Result<ConceptVector> {
    let dim = examples.validate()?;
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(CceError::invalid(format!(
            "split fraction must lie in (0, 1), got {split_fraction}"
        )));
    }
    if !(config.lambda > 0.0) || config.epochs == 0 {
        return Err(CceError::invalid("SVM needs lambda > 0 and at least one epoch"));
    }
    let first = &examples.positives[0];
    if examples
        .positives
        .iter()
        .chain(&examples.negatives)
        .all(|e| e == first)
    {
        return Err(CceError::TrainingFailure {
            concept: examples.name.clone(),
            reason: "positives and negatives are indistinguishable".into(),
        });
    }

    let (pos_train, pos_val) = split(&examples.positives, split_fraction, rng);
    let (neg_train, neg_val) = split(&examples.negatives, split_fraction, rng);

    let mut train: Vec<(&[f64], f64)> = pos_train.iter().map(|e| (e.as_slice(), 1.0)).collect();
    train.extend(neg_train.iter().map(|e| (e.as_slice(), -1.0)));

    let (w, b) = pegasos(&train, dim, config, rng);
    let norm = dot(&w, &w).sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(CceError::TrainingFailure {
            concept: examples.name.clone(),
            reason: format!("degenerate hyperplane (|w| = {norm})"),
        });
    }
    let direction = Vector::checked(w.iter().map(|x| x / norm).collect(), 0, "direction")
        .map_err(|_| CceError::TrainingFailure {
            concept: examples.name.clone(),
            reason: "non-finite weights".into(),
        })?;

    let mut cav = ConceptVector {
        name: examples.name.clone(),
        direction,
        intercept: b / norm,
        val_accuracy: 0.0,
        pos_score_max: f64::NEG_INFINITY,
        neg_score_min: f64::INFINITY,
    };
    let correct = pos_val.iter().filter(|e| cav.score_slice(e.as_slice()) > 0.0).count()
        + neg_val.iter().filter(|e| cav.score_slice(e.as_slice()) <= 0.0).count();
    cav.val_accuracy = correct as f64 / (pos_val.len() + neg_val.len()) as f64;
    for e in &pos_train {
        cav.pos_score_max = cav.pos_score_max.max(cav.score_slice(e.as_slice()));
    }
    for e in &neg_train {
        cav.neg_score_min = cav.neg_score_min.min(cav.score_slice(e.as_slice()));
    }
    cav.validate().map_err(|e| CceError::TrainingFailure {
        concept: examples.name.clone(),
        reason: e.to_string(),
    })?;
    Ok(cav)
}

/// Seeded holdout of `fraction` of `items`, keeping at least one on each side.
fn split<'a>(items: &'a [Vector], fraction: f64, rng: &mut RngState) -> (Vec<&'a Vector>, Vec<&'a Vector>) {
    let n = items.len();
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let val = order[..n_val].iter().map(|&i| &items[i]).collect();
    let train = order[n_val..].iter().map(|&i| &items[i]).collect();
    (train, val)
}

/// Primal hinge-loss SGD with step `1/(λt)`; the bias is an extra
/// regularized coordinate. Returns `(w, b)`.
fn pegasos(train: &[(&[f64], f64)], dim: usize, config: &SvmConfig, rng: &mut RngState) -> (Vec<f64>, f64) {
    let lambda = config.lambda;
    let radius_sq = 1.0 / lambda;
    let sq_norms: Vec<f64> = train.iter().map(|(x, _)| dot(x, x)).collect();

    // w = scale * v, so the per-step shrink is O(1).
    let mut v = vec![0.0; dim];
    let mut b = 0.0;
    let mut scale = 1.0;
    let mut v_sq = 0.0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut t = 0usize;
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            t += 1;
            let (x, y) = train[i];
            let eta = 1.0 / (lambda * t as f64);
            let vx = dot(&v, x);
            let margin = y * (scale * vx + b);

            let shrink = 1.0 - eta * lambda;
            if shrink == 0.0 {
                v.iter_mut().for_each(|vi| *vi = 0.0);
                v_sq = 0.0;
                scale = 1.0;
                b = 0.0;
            } else {
                scale *= shrink;
                b *= shrink;
            }

            if margin < 1.0 {
                let a = eta * y / scale;
                axpy(a, x, &mut v);
                v_sq += 2.0 * a * vx + a * a * sq_norms[i];
                b += eta * y;
            }

            let w_sq = scale * scale * v_sq + b * b;
            if w_sq > radius_sq {
                let f = (radius_sq / w_sq).sqrt();
                scale *= f;
                b *= f;
            }
            if scale < 1e-150 {
                v.iter_mut().for_each(|vi| *vi *= scale);
                v_sq = dot(&v, &v);
                scale = 1.0;
            }
        }
    }
    (v.into_iter().map(|vi| vi * scale).collect(), b)
}

/// The retained concept library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BankFile", into = "BankFile")]
pub struct ConceptBank {
    concepts: Vec<ConceptVector>,
    dim: usize,
    threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankFile {
    pub dim: usize,
    pub threshold: f64,
    pub concepts: Vec<ConceptVector>,
}

impl ConceptBank {
    /// Validates and wraps already-learned concepts.
    pub fn new(concepts: Vec<ConceptVector>, threshold: f64) -> Result<Self> {
        let first = concepts.first().ok_or(CceError::EmptyBank)?;
        let dim = first.direction.dim();
        let mut names = HashSet::new();
        for c in &concepts {
            c.validate()?;
            if c.direction.dim() != dim {
                return Err(CceError::invalid(format!(
                    "concept `{}` has dimension {}, bank has {dim}",
                    c.name,
                    c.direction.dim()
                )));
            }
            if c.val_accuracy < threshold {
                return Err(CceError::invalid(format!(
                    "concept `{}` accuracy {} is below the bank threshold {threshold}",
                    c.name, c.val_accuracy
                )));
            }
            if !names.insert(c.name.as_str()) {
                return Err(CceError::invalid(format!("duplicate concept name `{}`", c.name)));
            }
        }
        Ok(ConceptBank {
            concepts,
            dim,
            threshold,
        })
    }

    pub fn concepts(&self) -> &[ConceptVector] {
        &self.concepts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn names(&self) -> Vec<&str> {
        self.concepts.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ConceptVector> {
        self.concepts.iter().find(|c| c.name == name)
    }

    /// Concept directions stacked as rows (`n_concepts x dim`).
    pub fn direction_matrix(&self) -> Matrix {
        let rows: Vec<Vector> = self.concepts.iter().map(|c| c.direction.clone()).collect();
        Matrix::from_rows(&rows).expect("bank directions share one dimension")
    }

    /// The bank without `name`.
    pub fn without(&self, name: &str) -> Result<ConceptBank> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| CceError::InvalidTarget(name.to_string()))?;
        if self.concepts.len() == 1 {
            return Err(CceError::EmptyBank);
        }
        let mut concepts = self.concepts.clone();
        concepts.remove(idx);
        Ok(ConceptBank {
            concepts,
            dim: self.dim,
            threshold: self.threshold,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

impl TryFrom<BankFile> for ConceptBank {
    type Error = CceError;

    fn try_from(file: BankFile) -> Result<Self> {
        let bank = ConceptBank::new(file.concepts, file.threshold)?;
        if bank.dim != file.dim {
            return Err(CceError::invalid(format!(
                "bank declares dim {} but its concepts have dim {}",
                file.dim, bank.dim
            )));
        }
        Ok(bank)
    }
}

impl From<ConceptBank> for BankFile {
    fn from(bank: ConceptBank) -> Self {
        BankFile {
            dim: bank.dim,
            threshold: bank.threshold,
            concepts: bank.concepts,
        }
    }
}

/// Learns every concept and keeps those with `val_accuracy >= threshold`,
/// in input order. Concept `i` trains on `rng.derive(i)`, so the result does
/// not depend on scheduling.
pub fn build_bank(
    all_examples: &[ConceptExamples],
    threshold: f64,
    split_fraction: f64,
    rng: &RngState,
    config: &SvmConfig,
) -> Result<ConceptBank> {
    let first = all_examples
        .first()
        .ok_or_else(|| CceError::invalid("no concepts given"))?;
    let dim = first.validate()?;
    if let Some(bad) = all_examples.iter().find(|c| c.dim() != Some(dim)) {
        return Err(CceError::invalid(format!(
            "concept `{}` does not match embedding dimension {dim}",
            bad.name
        )));
    }
    let learned = all_examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| learn_cav(ex, split_fraction, &mut rng.derive(i as u64), config))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<ConceptVector> = learned
        .into_iter()
        .filter(|c| c.val_accuracy >= threshold)
        .collect();
    if kept.is_empty() {
        return Err(CceError::EmptyBank);
    }
    ConceptBank::new(kept, threshold)
}
