//! Single-concept baselines.

use crate::concept_bank::{ConceptBank, ConceptVector};
use crate::error::{CceError, Result};
use crate::model_head::ModelHead;
use crate::numerics::{dot, Vector};

use super::bounds::validity_bounds;
use super::solver::label_prob;
use super::ConceptRanking;

/// Adds each concept on its own, as far as its validity bound allows, and
/// scores it by the change in the label probability:
/// `p_y(e + w_max_i c_i) - p_y(e)`. Ranked by descending score.
pub fn cce_univariate(
    e: &Vector,
    label: usize,
    head: &ModelHead,
    bank: &ConceptBank,
) -> Result<ConceptRanking> {
    head.check_input(e.dim())?;
    head.check_label(label)?;
    let bounds = validity_bounds(e, bank)?;
    let base = label_prob(head, e.as_slice(), label);
    let mut moved = e.as_slice().to_vec();
    let scores = bank
        .concepts()
        .iter()
        .zip(bounds.w_max.iter())
        .map(|(c, &amount)| {
            if amount == 0.0 {
                return 0.0;
            }
            for ((m, x), d) in moved.iter_mut().zip(e.iter()).zip(c.direction.iter()) {
                *m = x + amount * d;
            }
            label_prob(head, &moved, label) - base
        })
        .collect();
    let names = bank.names().into_iter().map(String::from).collect();
    Ok(ConceptRanking::by_score(names, scores))
}

/// Conceptual sensitivity: the directional derivative of the label logit at
/// `e` along the concept direction.
pub fn css(e: &Vector, label: usize, head: &ModelHead, concept: &ConceptVector) -> Result<f64> {
    if concept.direction.dim() != e.dim() {
        return Err(CceError::invalid("concept and embedding dimensions differ"));
    }
    let g = head.logit_grad(e, label)?;
    Ok(dot(g.as_slice(), concept.direction.as_slice()))
}

/// [`css`] for every bank concept, ranked by descending sensitivity.
pub fn css_ranking(
    e: &Vector,
    label: usize,
    head: &ModelHead,
    bank: &ConceptBank,
) -> Result<ConceptRanking> {
    if e.dim() != bank.dim() {
        return Err(CceError::invalid("bank and embedding dimensions differ"));
    }
    let g = head.logit_grad(e, label)?;
    let scores = bank
        .concepts()
        .iter()
        .map(|c| dot(g.as_slice(), c.direction.as_slice()))
        .collect();
    let names = bank.names().into_iter().map(String::from).collect();
    Ok(ConceptRanking::by_score(names, scores))
}
