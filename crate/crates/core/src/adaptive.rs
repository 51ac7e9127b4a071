//! Intra-class variation statistics and the two selection rules built on them:
//! which batch sample refreshes a cluster's memory entry, and which clustering
//! outliers are admitted as negatives.
//!
//! For a class with `K` unit features `F` and temperature `τ`:
//!
//! * hardest similarity: `−τ log Σₙ Σₘ exp(−⟨Fₙ,Fₘ⟩/τ)`, a smooth minimum over
//!   all ordered pairs (diagonal included);
//! * per-instance similarity: `−τ log Σₘ exp(−⟨Fₙ,Fₘ⟩/τ)`;
//! * least-hardest similarity: `τ log Σₙ exp(Simₙ/τ)`, a smooth maximum of the
//!   per-instance values.
//!
//! The harmonic mean of the hardest and least-hardest similarities weights the
//! two into a single positive similarity, and its normalized position between
//! them is the class's `diff`.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numcore::{dot, logsumexp, EmbeddingMatrix};

/// Denominators smaller than this count as zero variation.
pub const ZERO_VARIATION: f64 = 1e-12;

fn check_class(f: &EmbeddingMatrix, tau: f64) -> Result<()> {
    if f.is_empty() {
        return Err(Error::Empty("class features"));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParam(format!("tau must be > 0, got {tau}")));
    }
    Ok(())
}

fn neg_scaled_gram_row(f: &EmbeddingMatrix, n: usize, tau: f64) -> Vec<f64> {
    let fn_ = f.row(n);
    f.iter_rows().map(|fm| -dot(fn_, fm) / tau).collect()
}

/// Smooth minimum of all pairwise similarities in the class.
pub fn hardest_similarity(f: &EmbeddingMatrix, tau: f64) -> Result<f64> {
    check_class(f, tau)?;
    let k = f.rows();
    let mut all = Vec::with_capacity(k * k);
    for n in 0..k {
        all.extend(neg_scaled_gram_row(f, n, tau));
    }
    Ok(-tau * logsumexp(&all)?)
}

/// Smooth minimum of each sample's similarities to the class.
pub fn per_instance_similarity(f: &EmbeddingMatrix, tau: f64) -> Result<Vec<f64>> {
    check_class(f, tau)?;
    (0..f.rows())
        .map(|n| Ok(-tau * logsumexp(&neg_scaled_gram_row(f, n, tau))?))
        .collect()
}

/// Smooth maximum of the per-instance similarities.
pub fn least_hardest_similarity(f: &EmbeddingMatrix, tau: f64) -> Result<f64> {
    let per = per_instance_similarity(f, tau)?;
    least_hardest_from_instances(&per, tau)
}

fn least_hardest_from_instances(per_instance: &[f64], tau: f64) -> Result<f64> {
    let scaled: Vec<f64> = per_instance.iter().map(|s| s / tau).collect();
    Ok(tau * logsumexp(&scaled)?)
}

/// Harmonic mean `h` of the two similarities and the weight `α` (zero when
/// the hardest similarity is negative). A zero denominator yields `h = 0`.
pub fn adaptive_weight(sim_h: f64, sim_lh: f64) -> (f64, f64) {
    let denom = sim_lh + sim_h;
    let h = if denom == 0.0 {
        0.0
    } else {
        2.0 * sim_lh * sim_h / denom
    };
    let alpha = if sim_h >= 0.0 { h } else { 0.0 };
    (h, alpha)
}

pub fn weighted_similarity(alpha: f64, sim_h: f64, sim_lh: f64) -> f64 {
    alpha * sim_h + (1.0 - alpha) * sim_lh
}

/// Normalized position of `sim_plus` between the hardest and least-hardest
/// similarities, optionally damped by `gamma`, clamped to `[0, 1]`.
pub fn intra_class_diff(sim_plus: f64, sim_h: f64, sim_lh: f64, gamma: Option<f64>) -> f64 {
    let span = sim_lh - sim_h;
    let mut diff = if span.abs() < ZERO_VARIATION {
        0.0
    } else {
        (sim_plus - sim_h) / span
    };
    if let Some(g) = gamma {
        diff *= g;
    }
    diff.clamp(0.0, 1.0)
}

/// Rank fraction used to pick the memory-update sample: `1` when the two
/// similarities round to a ratio of one (small variation), otherwise `diff`.
/// A non-positive hardest similarity always takes the `diff` branch.
pub fn select_beta(sim_h: f64, sim_lh: f64, diff: f64) -> f64 {
    let beta = if sim_h > 0.0 && (sim_lh / sim_h).round() == 1.0 {
        1.0
    } else {
        diff
    };
    beta.clamp(0.0, 1.0)
}

/// 1-based rank `clamp(ceil(β·K), 1, K)`.
pub fn beta_rank(beta: f64, k: usize) -> usize {
    ((beta * k as f64).ceil() as usize).clamp(1, k)
}

/// Orders the class samples by similarity to `centroid`, most similar first,
/// ties broken by ascending index.
pub fn rank_by_similarity(f: &EmbeddingMatrix, centroid: &[f64]) -> Result<Vec<usize>> {
    if centroid.len() != f.dim() {
        return Err(Error::DimMismatch {
            expected: f.dim(),
            got: centroid.len(),
        });
    }
    let sims: Vec<f64> = f.iter_rows().map(|r| dot(centroid, r)).collect();
    let mut order: Vec<usize> = (0..f.rows()).collect();
    order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    Ok(order)
}

/// Index of the sample at rank `ceil(β·K)` in descending similarity to the
/// centroid. `β = 1` picks the least similar sample.
pub fn select_update_sample(f: &EmbeddingMatrix, centroid: &[f64], beta: f64) -> Result<usize> {
    if f.is_empty() {
        return Err(Error::Empty("class features"));
    }
    if beta.is_nan() {
        return Err(Error::NonFinite("beta"));
    }
    let order = rank_by_similarity(f, centroid)?;
    Ok(order[beta_rank(beta, f.rows()) - 1])
}

/// Per-class statistics for one mini-batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAdaptiveStats {
    pub sim_h: f64,
    pub sim_per_instance: Vec<f64>,
    pub sim_lh: f64,
    pub h: f64,
    pub alpha: f64,
    pub sim_plus: f64,
    pub diff: f64,
    pub beta: f64,
}

impl ClassAdaptiveStats {
    pub fn compute(f: &EmbeddingMatrix, tau: f64, gamma: Option<f64>) -> Result<Self> {
        let sim_h = hardest_similarity(f, tau)?;
        let sim_per_instance = per_instance_similarity(f, tau)?;
        let sim_lh = least_hardest_from_instances(&sim_per_instance, tau)?;
        let (h, alpha) = adaptive_weight(sim_h, sim_lh);
        let sim_plus = weighted_similarity(alpha, sim_h, sim_lh);
        let diff = intra_class_diff(sim_plus, sim_h, sim_lh, gamma);
        let beta = select_beta(sim_h, sim_lh, diff);
        Ok(Self {
            sim_h,
            sim_per_instance,
            sim_lh,
            h,
            alpha,
            sim_plus,
            diff,
            beta,
        })
    }
}

pub fn global_diff(diffs: &[f64]) -> Result<f64> {
    if diffs.is_empty() {
        return Err(Error::Empty("diff list"));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Outcome of outlier admission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaOFDecision {
    pub diff_global: f64,
    pub admitted_fraction: f64,
    /// Row indices into the outlier matrix, farthest from any centroid first.
    pub admitted_indices: Vec<usize>,
}

/// Cosine distance from each outlier to its nearest centroid.
pub fn nearest_centroid_distance(outliers: &EmbeddingMatrix, centroids: &EmbeddingMatrix) -> Vec<f64> {
    outliers
        .iter_rows()
        .map(|o| {
            let best = centroids
                .iter_rows()
                .map(|c| dot(o, c))
                .fold(f64::NEG_INFINITY, f64::max);
            1.0 - best
        })
        .collect()
}

/// Admits the `clamp(1 − diff_global, f_min, 1)` fraction of outliers that lie
/// farthest from their nearest centroid. As `diff_global` falls, admission
/// extends from far outliers toward near ones.
pub fn adaof_admit(
    outliers: &EmbeddingMatrix,
    centroids: &EmbeddingMatrix,
    diff_global: f64,
    f_min: f64,
) -> Result<AdaOFDecision> {
    if centroids.is_empty() {
        return Err(Error::Empty("centroid set"));
    }
    if outliers.dim() != centroids.dim() {
        return Err(Error::DimMismatch {
            expected: centroids.dim(),
            got: outliers.dim(),
        });
    }
    if !(0.0..=1.0).contains(&f_min) || diff_global.is_nan() {
        return Err(Error::InvalidParam(format!(
            "need f_min in [0, 1] and finite diff_global (got {f_min}, {diff_global})"
        )));
    }
    let dist = nearest_centroid_distance(outliers, centroids);
    let mut order: Vec<usize> = (0..outliers.rows()).collect();
    order.sort_by(|&a, &b| dist[b].partial_cmp(&dist[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let admitted_fraction = (1.0 - diff_global).clamp(f_min, 1.0);
    let n_o = outliers.rows();
    let count = ((admitted_fraction * n_o as f64).round() as usize).min(n_o);
    order.truncate(count);
    Ok(AdaOFDecision {
        diff_global,
        admitted_fraction,
        admitted_indices: order,
    })
}
