//! Conceptual counterfactual explanations.
//!
//! Given an embedding the head gets wrong, find a sparse combination of
//! concept directions, `w`, whose addition to the embedding restores the
//! label, subject to per-concept validity bounds. The concepts with the
//! largest `|w_i|` explain the mistake: positive scores say the concept is
//! missing, negative scores say it should be removed.

mod baselines;
mod bounds;
mod report;
mod solver;

pub use baselines::{cce_univariate, css, css_ranking};
pub use bounds::{validity_bounds, ValidityBounds};
pub use report::{BaselineReport, ConceptEntry, ExplanationReport, PredictionSummary, RankedConcept};
pub use solver::{cce_batch, cce_explain, cce_solve, CceResult, OptimConfig, StepInfo};

/// Concept scores in bank order plus the order in which to present them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptRanking {
    pub names: Vec<String>,
    pub scores: Vec<f64>,
    /// Bank indices, best first.
    pub order: Vec<usize>,
}

impl ConceptRanking {
    /// Orders by descending score.
    pub(crate) fn by_score(names: Vec<String>, scores: Vec<f64>) -> Self {
        let order = sorted_indices(&scores, |s| s);
        ConceptRanking { names, scores, order }
    }

    /// Orders by descending magnitude; signs are kept in `scores`.
    pub(crate) fn by_magnitude(names: Vec<String>, scores: Vec<f64>) -> Self {
        let order = sorted_indices(&scores, f64::abs);
        ConceptRanking { names, scores, order }
    }

    /// Concept names, best first.
    pub fn ranked_names(&self) -> Vec<String> {
        self.order.iter().map(|&i| self.names[i].clone()).collect()
    }

    /// 1-based rank of `name`.
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.order
            .iter()
            .position(|&i| self.names[i] == name)
            .map(|p| p + 1)
    }
}

/// Stable descending sort on `key`, ties broken by lower index.
fn sorted_indices(scores: &[f64], key: impl Fn(f64) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| key(scores[b]).total_cmp(&key(scores[a])).then(a.cmp(&b)));
    order
}
