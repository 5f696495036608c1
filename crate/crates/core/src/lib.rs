//! Conceptual counterfactual explanations for classifier mistakes.
//!
//! The crate works entirely in the embedding space of a classifier split
//! into a bottom (input → embedding) and a differentiable top ([`ModelHead`]).
//! Concepts are learned as linear directions in that space
//! ([`concept_bank`]), and a mistake is explained by the sparse, bounded
//! combination of concepts that would fix it ([`explainer`]).
//! [`scenarios`] and [`harness`] generate controlled spurious-correlation
//! worlds and score explanation methods on them.

pub mod concept_bank;
pub mod error;
pub mod explainer;
pub mod harness;
pub mod model_head;
pub mod numerics;
pub mod scenarios;

pub use concept_bank::{build_bank, concept_score, learn_cav, ConceptBank, ConceptExamples, ConceptVector, SvmConfig};
pub use error::{CceError, Result};
pub use explainer::{
    cce_batch, cce_explain, cce_solve, cce_univariate, css, css_ranking, validity_bounds, CceResult,
    BaselineReport, ConceptRanking, ExplanationReport, OptimConfig, ValidityBounds,
};
pub use harness::{precision_at_k, rank_stats, run_suite, EmbeddingFile, EvalSummary, Method};
pub use model_head::{Activation, Layer, ModelHead, Prediction};
pub use numerics::{Matrix, RngState, Vector};
pub use scenarios::{generate_world, ScenarioSpec, ScenarioWorld};
