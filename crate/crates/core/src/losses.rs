//! Focal loss, the contrastive tracking loss over candidate/reference
//! embedding pairs, and its analytic gradient with respect to the candidate.

use serde::{Deserialize, Serialize};

use crate::embedding::{assignment_probabilities, InstanceEmbedding};
use crate::error::{Error, Result};

const EPS: f64 = 1e-8;

/// Focal loss shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha_t: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha_t: 0.25,
            gamma: 2.0,
        }
    }
}

/// How per-label focal terms aggregate into one loss value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    #[default]
    Sum,
    Mean,
}

/// One training example: a candidate embedding, the reference embeddings of
/// already-identified instances, and the true label (0 = no existing
/// identity).
#[derive(Debug, Clone)]
pub struct TrackTrainingPair {
    pub candidate: InstanceEmbedding,
    pub references: Vec<InstanceEmbedding>,
    pub gt_label: usize,
}

impl TrackTrainingPair {
    pub fn new(
        candidate: InstanceEmbedding,
        references: Vec<InstanceEmbedding>,
        gt_label: usize,
    ) -> Result<Self> {
        if gt_label > references.len() {
            return Err(Error::LabelRange {
                label: gt_label,
                refs: references.len(),
            });
        }
        for r in &references {
            if r.dim() != candidate.dim() {
                return Err(Error::EmbeddingDim {
                    expected: candidate.dim(),
                    got: r.dim(),
                });
            }
        }
        Ok(Self {
            candidate,
            references,
            gt_label,
        })
    }

    pub fn num_references(&self) -> usize {
        self.references.len()
    }
}

/// `-alpha_t * (1 - p)^gamma * ln(p)` for `p` in `(0, 1]`.
pub fn focal_loss(p: f64, fp: &FocalParams) -> Result<f64> {
    if p <= 0.0 || !p.is_finite() {
        return Err(Error::ProbabilityRange(p));
    }
    Ok(focal_term(p.min(1.0), fp))
}

fn focal_term(p: f64, fp: &FocalParams) -> f64 {
    let q = p.clamp(EPS, 1.0);
    -fp.alpha_t * (1.0 - q).max(0.0).powf(fp.gamma) * q.ln()
}

/// Derivative of `focal_term` with respect to `p`; zero inside the clamp.
fn focal_term_grad(p: f64, fp: &FocalParams) -> f64 {
    if p < EPS || p > 1.0 {
        return 0.0;
    }
    let q = p;
    let one_minus = (1.0 - q).max(0.0);
    fp.alpha_t * fp.gamma * one_minus.powf(fp.gamma - 1.0) * q.ln()
        - fp.alpha_t * one_minus.powf(fp.gamma) / q
}

/// Target probability for label `n`: the assignment probability itself when
/// `n` is the true label, its complement otherwise.
pub fn contrastive_target(p_vec: &[f64], gt_label: usize, n: usize) -> f64 {
    if n == gt_label {
        p_vec[n]
    } else {
        1.0 - p_vec[n]
    }
}

/// Contrastive focal loss summed over all labels `{0..N}`.
pub fn contrastive_focal_loss(pair: &TrackTrainingPair, fp: &FocalParams) -> Result<f64> {
    contrastive_focal_loss_reduced(pair, fp, LossReduction::Sum)
}

pub fn contrastive_focal_loss_reduced(
    pair: &TrackTrainingPair,
    fp: &FocalParams,
    reduction: LossReduction,
) -> Result<f64> {
    let probs = assignment_probabilities(&pair.candidate, &pair.references)?;
    let mut loss = 0.0;
    for n in 0..probs.len() {
        loss += focal_term(contrastive_target(&probs, pair.gt_label, n), fp);
    }
    Ok(match reduction {
        LossReduction::Sum => loss,
        LossReduction::Mean => loss / probs.len() as f64,
    })
}

/// Loss together with its analytic gradient with respect to the candidate
/// embedding, obtained by the chain rule through the assignment softmax.
pub fn contrastive_focal_loss_grad(
    pair: &TrackTrainingPair,
    fp: &FocalParams,
) -> Result<(f64, Vec<f64>)> {
    contrastive_focal_loss_grad_reduced(pair, fp, LossReduction::Sum)
}

pub fn contrastive_focal_loss_grad_reduced(
    pair: &TrackTrainingPair,
    fp: &FocalParams,
    reduction: LossReduction,
) -> Result<(f64, Vec<f64>)> {
    let dim = pair.candidate.dim();
    let n_refs = pair.references.len();
    let probs = assignment_probabilities(&pair.candidate, &pair.references)?;

    let scale = match reduction {
        LossReduction::Sum => 1.0,
        LossReduction::Mean => 1.0 / probs.len() as f64,
    };

    let mut loss = 0.0;
    // a[n] = d(loss)/d(p_n) for every label including 0; only the softmax
    // logits of labels 1..N depend on the candidate.
    let mut dloss_dp = vec![0.0f64; probs.len()];
    for n in 0..probs.len() {
        let target = contrastive_target(&probs, pair.gt_label, n);
        loss += focal_term(target, fp);
        let sign = if n == pair.gt_label { 1.0 } else { -1.0 };
        dloss_dp[n] = focal_term_grad(target, fp) * sign;
    }

    // dp_n/dz_k = p_n (delta_nk - p_k) for k in 1..N, so the gradient is
    // sum_k c_k e_k with c_k = a_k - p_k * sum_n a_n and a_n = dloss_dp[n] * p_n.
    let a: Vec<f64> = dloss_dp
        .iter()
        .zip(probs.iter())
        .map(|(&d, &p)| d * p)
        .collect();
    let a_total: f64 = a.iter().sum();

    let mut grad = vec![0.0f64; dim];
    for k in 0..n_refs {
        let coeff = (a[k + 1] - probs[k + 1] * a_total) * scale;
        for (g, &e) in grad.iter_mut().zip(pair.references[k].as_slice()) {
            *g += coeff * e;
        }
    }
    Ok((loss * scale, grad))
}
