use serde::{Deserialize, Serialize};

use crate::model_head::Prediction;

use super::solver::CceResult;
use super::ConceptRanking;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub class: usize,
    pub confidence: f64,
}

impl From<&Prediction> for PredictionSummary {
    fn from(p: &Prediction) -> Self {
        PredictionSummary {
            class: p.predicted_class,
            confidence: p.confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub concept: String,
    pub score: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// 1-based.
    pub rank: usize,
}

/// Per-sample explanation record as written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub sample_id: String,
    pub label: usize,
    pub prediction_before: PredictionSummary,
    pub prediction_after: PredictionSummary,
    pub top_k: Vec<ConceptEntry>,
    pub loss_initial: f64,
    pub loss_final: f64,
    pub steps: usize,
    pub wall_time_ms: f64,
}

impl ExplanationReport {
    pub fn new(sample_id: impl Into<String>, label: usize, result: &CceResult, top_k: usize, wall_time_ms: f64) -> Self {
        let top_k = result
            .ranking
            .order
            .iter()
            .take(top_k)
            .enumerate()
            .map(|(r, &i)| ConceptEntry {
                concept: result.ranking.names[i].clone(),
                score: result.scores[i],
                w_min: result.bounds.w_min[i],
                w_max: result.bounds.w_max[i],
                rank: r + 1,
            })
            .collect();
        ExplanationReport {
            sample_id: sample_id.into(),
            label,
            prediction_before: result.prediction_before().into(),
            prediction_after: result.prediction_after().into(),
            top_k,
            loss_initial: result.loss_initial,
            loss_final: result.loss_final,
            steps: result.steps,
            wall_time_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConcept {
    pub concept: String,
    pub score: f64,
    pub rank: usize,
}

/// Top of a baseline ranking for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub sample_id: String,
    pub label: usize,
    pub method: String,
    pub top_k: Vec<RankedConcept>,
}

impl BaselineReport {
    pub fn new(sample_id: impl Into<String>, label: usize, method: impl Into<String>, ranking: &ConceptRanking, top_k: usize) -> Self {
        BaselineReport {
            sample_id: sample_id.into(),
            label,
            method: method.into(),
            top_k: ranking
                .order
                .iter()
                .take(top_k)
                .enumerate()
                .map(|(r, &i)| RankedConcept {
                    concept: ranking.names[i].clone(),
                    score: ranking.scores[i],
                    rank: r + 1,
                })
                .collect(),
        }
    }
}
