//! HybridNCE over centroids plus admitted outliers, probability distillation,
//! and the combined objective. Gradients are taken with respect to the query
//! embedding only; memory entries never receive gradient.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::memory::ClusterMemory;
use crate::numcore::{dot, logsumexp, softmax, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub hybrid: f64,
    pub mse: f64,
    pub total: f64,
    pub lambda_m: f64,
}

pub fn total(hybrid: f64, mse: f64, lambda_m: f64) -> LossBreakdown {
    LossBreakdown {
        hybrid,
        mse,
        total: hybrid + lambda_m * mse,
        lambda_m,
    }
}

impl LossBreakdown {
    /// Mean of per-sample breakdowns, summed in order.
    pub fn mean(items: &[LossBreakdown], lambda_m: f64) -> LossBreakdown {
        if items.is_empty() {
            return total(0.0, 0.0, lambda_m);
        }
        let n = items.len() as f64;
        let hybrid = items.iter().map(|l| l.hybrid).sum::<f64>() / n;
        let mse = items.iter().map(|l| l.mse).sum::<f64>() / n;
        total(hybrid, mse, lambda_m)
    }
}

/// `−log softmax([⟨q,Φ⟩ ∥ ⟨q,𝓘⟩] / τ)` at the positive cluster, and its
/// gradient `(Σⱼ pⱼ vⱼ − Φ⁺) / τ`.
pub fn hybrid_nce(q: &[f64], memory: &ClusterMemory, positive_id: usize) -> Result<(f64, Vec<f64>)> {
    let n_c = memory.n_clusters();
    if n_c == 0 {
        return Err(Error::Empty("memory has no clusters"));
    }
    if positive_id >= n_c {
        return Err(Error::InvalidClass {
            id: positive_id,
            n: n_c,
        });
    }
    let tau = memory.temperature();
    let (cs, os) = memory.scores(q)?;
    let logits: Vec<f64> = cs.iter().chain(&os).map(|s| s / tau).collect();
    let lse = logsumexp(&logits)?;
    let loss = lse - logits[positive_id];

    let mut grad = vec![0.0; q.len()];
    let banks = memory.centroids().iter_rows().chain(memory.outlier_bank().iter_rows());
    for (v, &z) in banks.zip(&logits) {
        let p = (z - lse).exp();
        for (g, x) in grad.iter_mut().zip(v) {
            *g += p * x;
        }
    }
    for (g, x) in grad.iter_mut().zip(memory.centroids().row(positive_id)) {
        *g = (*g - x) / tau;
    }
    Ok((loss, grad))
}

/// Softmax of `⟨q, Φₖ⟩ / τ` over centroids only.
pub fn class_prob(q: &[f64], centroids: &EmbeddingMatrix, tau: f64) -> Result<Vec<f64>> {
    if centroids.is_empty() {
        return Err(Error::Empty("centroid set"));
    }
    if q.len() != centroids.dim() {
        return Err(Error::DimMismatch {
            expected: centroids.dim(),
            got: q.len(),
        });
    }
    let logits: Vec<f64> = centroids.iter_rows().map(|c| dot(q, c) / tau).collect();
    softmax(&logits)
}

/// Pulls a gradient with respect to `class_prob`'s output back to `q`.
pub fn class_prob_backward(p: &[f64], grad_p: &[f64], centroids: &EmbeddingMatrix, tau: f64) -> Vec<f64> {
    let mean = dot(p, grad_p);
    let mut grad = vec![0.0; centroids.dim()];
    for ((c, pk), gk) in centroids.iter_rows().zip(p).zip(grad_p) {
        let dz = pk * (gk - mean) / tau;
        for (g, x) in grad.iter_mut().zip(c) {
            *g += dz * x;
        }
    }
    grad
}

/// `Σₖ (p_s[k] − p_t[k])²` and its gradient with respect to `p_s`; the
/// teacher distribution is a constant.
pub fn mse_distill(p_s: &[f64], p_t: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p_s.len() != p_t.len() {
        return Err(Error::DimMismatch {
            expected: p_s.len(),
            got: p_t.len(),
        });
    }
    let diff: Vec<f64> = p_s.iter().zip(p_t).map(|(s, t)| s - t).collect();
    let loss = dot(&diff, &diff);
    Ok((loss, diff.into_iter().map(|d| 2.0 * d).collect()))
}

/// Full per-sample objective for a student embedding `q_s` with teacher
/// embedding `q_t`, returning the breakdown and `∂total/∂q_s`.
pub fn sample_objective(
    q_s: &[f64],
    q_t: &[f64],
    memory: &ClusterMemory,
    positive_id: usize,
    lambda_m: f64,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let (hybrid, mut grad) = hybrid_nce(q_s, memory, positive_id)?;
    let tau = memory.temperature();
    let mut mse = 0.0;
    if lambda_m != 0.0 {
        let p_s = class_prob(q_s, memory.centroids(), tau)?;
        let p_t = class_prob(q_t, memory.centroids(), tau)?;
        let (l, g_p) = mse_distill(&p_s, &p_t)?;
        mse = l;
        let g_q = class_prob_backward(&p_s, &g_p, memory.centroids(), tau);
        for (g, x) in grad.iter_mut().zip(g_q) {
            *g += lambda_m * x;
        }
    }
    Ok((total(hybrid, mse, lambda_m), grad))
}
