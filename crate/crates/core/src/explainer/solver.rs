use serde::{Deserialize, Serialize};

use crate::concept_bank::ConceptBank;
use crate::error::{CceError, Result};
use crate::model_head::{ModelHead, Prediction};
use crate::numerics::{cross_entropy_slice, log_sum_exp, Matrix, Vector};

use super::bounds::{validity_bounds, ValidityBounds};
use super::ConceptRanking;

const MAX_HALVINGS: usize = 10;
const STEP_TOL: f64 = 1e-7;

/// Settings for the box-constrained elastic-net solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    /// L1 weight.
    pub alpha: f64,
    /// L2 (norm, not squared) weight.
    pub beta: f64,
    pub step_size: f64,
    pub max_steps: usize,
    /// First-moment decay.
    pub momentum: f64,
    /// Second-moment decay.
    pub momentum2: f64,
    pub epsilon: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            alpha: 0.01,
            beta: 0.01,
            step_size: 0.01,
            max_steps: 100,
            momentum: 0.9,
            momentum2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.beta >= 0.0
            && self.step_size > 0.0
            && self.step_size.is_finite()
            && self.max_steps >= 1
            && (0.0..1.0).contains(&self.momentum)
            && (0.0..1.0).contains(&self.momentum2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(CceError::invalid(format!("invalid optimizer settings: {self:?}")))
        }
    }
}

/// One accepted solver iteration, passed to observers.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<'a> {
    pub step: usize,
    pub w: &'a [f64],
    pub loss: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CceResult {
    /// `w`, one entry per bank concept.
    pub scores: Vector,
    pub bounds: ValidityBounds,
    /// Concepts by descending `|w_i|`.
    pub ranking: ConceptRanking,
    pub loss_initial: f64,
    pub loss_final: f64,
    /// Iterations performed.
    pub steps: usize,
    /// One entry per explained sample.
    pub predictions_before: Vec<Prediction>,
    pub predictions_after: Vec<Prediction>,
}

impl CceResult {
    pub fn prediction_before(&self) -> &Prediction {
        &self.predictions_before[0]
    }

    pub fn prediction_after(&self) -> &Prediction {
        &self.predictions_after[0]
    }

    pub fn ranked_names(&self) -> Vec<String> {
        self.ranking.ranked_names()
    }
}

/// Explains one sample with bounds from [`validity_bounds`].
pub fn cce_explain(
    e: &Vector,
    label: usize,
    head: &ModelHead,
    bank: &ConceptBank,
    cfg: &OptimConfig,
) -> Result<CceResult> {
    let bounds = validity_bounds(e, bank)?;
    cce_solve(&[(e.clone(), label)], head, bank, &bounds, cfg, &mut |_| {})
}

/// One shared score vector for a set of samples: mean cross-entropy, bounds
/// averaged over the samples.
pub fn cce_batch(
    samples: &[(Vector, usize)],
    head: &ModelHead,
    bank: &ConceptBank,
    cfg: &OptimConfig,
) -> Result<CceResult> {
    let per_sample = samples
        .iter()
        .map(|(e, _)| validity_bounds(e, bank))
        .collect::<Result<Vec<_>>>()?;
    let bounds = ValidityBounds::mean(&per_sample)?;
    cce_solve(samples, head, bank, &bounds, cfg, &mut |_| {})
}

/// Minimizes
/// `mean_i CE(y_i, head(e_i + Σ_j w_j c_j)) + α|w|₁ + β|w|₂`
/// over `bounds.w_min <= w <= bounds.w_max`, starting at `w = 0`.
///
/// Steps use bias-corrected first/second moments of the minimum-norm
/// subgradient. A coordinate is never moved across zero in one step, which
/// lets the L1 term produce exact zeros. Each candidate is projected onto the
/// box and the step size is halved (at most ten times) until the objective
/// does not increase, so the returned loss never exceeds the initial one.
pub fn cce_solve(
    samples: &[(Vector, usize)],
    head: &ModelHead,
    bank: &ConceptBank,
    bounds: &ValidityBounds,
    cfg: &OptimConfig,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<CceResult> {
    cfg.validate()?;
    if bank.is_empty() {
        return Err(CceError::EmptyBank);
    }
    if samples.is_empty() {
        return Err(CceError::invalid("nothing to explain"));
    }
    if bank.dim() != head.input_dim() {
        return Err(CceError::invalid(format!(
            "bank dimension {} does not match head input {}",
            bank.dim(),
            head.input_dim()
        )));
    }
    if bounds.len() != bank.len() {
        return Err(CceError::invalid(format!(
            "{} bounds for {} concepts",
            bounds.len(),
            bank.len()
        )));
    }
    for (e, label) in samples {
        head.check_input(e.dim())?;
        head.check_label(*label)?;
    }

    let objective = Objective {
        samples,
        head,
        concepts: bank.direction_matrix(),
        alpha: cfg.alpha,
        beta: cfg.beta,
    };
    let lo = bounds.w_min.as_slice();
    let hi = bounds.w_max.as_slice();
    let n = bank.len();

    let mut w = vec![0.0; n];
    let (mut ce, mut grad) = objective.ce_and_grad(&w);
    let loss_initial = ce + objective.penalty(&w);
    check_finite(loss_initial, 0)?;
    let mut loss = loss_initial;

    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut t = 0i32;
    let mut restarted = false;
    let mut steps = 0;

    for step in 1..=cfg.max_steps {
        let pg = objective.pseudo_gradient(&w, &grad);
        if pg.iter().all(|&g| g == 0.0) {
            break;
        }

        t += 1;
        let c1 = 1.0 - cfg.momentum.powi(t);
        let c2 = 1.0 - cfg.momentum2.powi(t);
        let mut dir = vec![0.0; n];
        for i in 0..n {
            m1[i] = cfg.momentum * m1[i] + (1.0 - cfg.momentum) * pg[i];
            m2[i] = cfg.momentum2 * m2[i] + (1.0 - cfg.momentum2) * pg[i] * pg[i];
            dir[i] = (m1[i] / c1) / ((m2[i] / c2).sqrt() + cfg.epsilon);
        }

        let mut eta = cfg.step_size;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = propose(&w, &dir, &pg, eta, lo, hi);
            let f = objective.ce(&cand) + objective.penalty(&cand);
            check_finite(f, step)?;
            if f <= loss {
                accepted = Some(cand);
                break;
            }
            eta *= 0.5;
        }

        steps = step;
        let Some(cand) = accepted else {
            // The momentum direction stopped being a descent direction.
            // Restart the moments once before giving up.
            if restarted {
                break;
            }
            restarted = true;
            m1.iter_mut().for_each(|x| *x = 0.0);
            m2.iter_mut().for_each(|x| *x = 0.0);
            t = 0;
            continue;
        };
        restarted = false;

        let delta = w
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        w = cand;
        debug_assert!(bounds.contains(&w), "iterate left the validity box");
        (ce, grad) = objective.ce_and_grad(&w);
        loss = ce + objective.penalty(&w);
        check_finite(loss, step)?;
        observer(&StepInfo {
            step,
            w: &w,
            loss,
            step_size: eta,
        });
        if delta < STEP_TOL {
            break;
        }
    }

    let mut predictions_before = Vec::with_capacity(samples.len());
    let mut predictions_after = Vec::with_capacity(samples.len());
    let shift = objective.concepts.matvec_t(&w);
    for (e, _) in samples {
        predictions_before.push(Prediction::from_logits(head.logits(e.as_slice()))?);
        let moved: Vec<f64> = e.iter().zip(&shift).map(|(a, b)| a + b).collect();
        predictions_after.push(Prediction::from_logits(head.logits(&moved))?);
    }

    let names = bank.names().into_iter().map(String::from).collect();
    let scores = Vector::checked(w, steps, "scores")?;
    Ok(CceResult {
        ranking: ConceptRanking::by_magnitude(names, scores.as_slice().to_vec()),
        scores,
        bounds: bounds.clone(),
        loss_initial,
        loss_final: loss,
        steps,
        predictions_before,
        predictions_after,
    })
}

fn check_finite(loss: f64, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(CceError::NumericalFailure {
            step,
            what: format!("objective evaluated to {loss}"),
        })
    }
}

/// Candidate `w - eta * dir`, kept in the current orthant and the box.
fn propose(w: &[f64], dir: &[f64], pg: &[f64], eta: f64, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    w.iter()
        .enumerate()
        .map(|(i, &wi)| {
            let mut x = wi - eta * dir[i];
            let crossed = if wi != 0.0 {
                x * wi < 0.0
            } else {
                // leave zero only in the descent direction
                pg[i] == 0.0 || x * pg[i] > 0.0
            };
            if crossed {
                x = 0.0;
            }
            x.clamp(lo[i], hi[i])
        })
        .collect()
}

struct Objective<'a> {
    samples: &'a [(Vector, usize)],
    head: &'a ModelHead,
    /// `n_concepts x dim`
    concepts: Matrix,
    alpha: f64,
    beta: f64,
}

impl Objective<'_> {
    fn perturbed(&self, e: &[f64], shift: &[f64]) -> Vec<f64> {
        e.iter().zip(shift).map(|(a, b)| a + b).collect()
    }

    fn ce(&self, w: &[f64]) -> f64 {
        let shift = self.concepts.matvec_t(w);
        let total: f64 = self
            .samples
            .iter()
            .map(|(e, label)| {
                let z = self.head.logits(&self.perturbed(e.as_slice(), &shift));
                log_sum_exp(&z) - z[*label]
            })
            .sum();
        total / self.samples.len() as f64
    }

    /// Mean cross-entropy and its gradient with respect to `w`.
    fn ce_and_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let shift = self.concepts.matvec_t(w);
        let dim = self.concepts.cols();
        let mut loss = 0.0;
        let mut grad_e = vec![0.0; dim];
        for (e, label) in self.samples {
            let (l, g) = self
                .head
                .loss_and_input_grad(&self.perturbed(e.as_slice(), &shift), *label);
            loss += l;
            for (acc, gi) in grad_e.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        let k = self.samples.len() as f64;
        for g in grad_e.iter_mut() {
            *g /= k;
        }
        (loss / k, self.concepts.matvec(&grad_e))
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let l1: f64 = w.iter().map(|x| x.abs()).sum();
        let l2 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.alpha * l1 + self.beta * l2
    }

    /// Minimum-norm element of the objective's subdifferential, coordinate
    /// by coordinate.
    fn pseudo_gradient(&self, w: &[f64], grad: &[f64]) -> Vec<f64> {
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter()
            .zip(grad)
            .map(|(&wi, &g)| {
                let d = if norm > 0.0 { g + self.beta * wi / norm } else { g };
                if wi > 0.0 {
                    d + self.alpha
                } else if wi < 0.0 || d > self.alpha {
                    d - self.alpha
                } else if d < -self.alpha {
                    d + self.alpha
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Single-sample loss helper shared with the baselines.
pub(crate) fn label_prob(head: &ModelHead, e: &[f64], label: usize) -> f64 {
    let z = head.logits(e);
    let (loss, _) = cross_entropy_slice(&z, label);
    (-loss).exp()
}
