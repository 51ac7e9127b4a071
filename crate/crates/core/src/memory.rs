//! Cluster-level memory dictionary: one unit centroid per pseudo-label plus a
//! bank of admitted outlier features used only as negatives.

use crate::clusterer::PseudoLabeling;
use crate::error::{Error, Result};
use crate::numcore::{dot, l2_normalize_in_place, norm, EmbeddingMatrix, UNIT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMemory {
    centroids: EmbeddingMatrix,
    outliers: EmbeddingMatrix,
    momentum: f64,
    temperature: f64,
}

impl ClusterMemory {
    /// Builds memory directly from unit centroids. Mostly useful in tests.
    pub fn from_centroids(centroids: EmbeddingMatrix, momentum: f64, temperature: f64) -> Result<Self> {
        check_params(momentum, temperature)?;
        let centroids = require_unit(centroids)?;
        let outliers = EmbeddingMatrix::empty(centroids.dim())?;
        Ok(Self {
            centroids,
            outliers,
            momentum,
            temperature,
        })
    }

    pub fn centroids(&self) -> &EmbeddingMatrix {
        &self.centroids
    }

    pub fn outlier_bank(&self) -> &EmbeddingMatrix {
        &self.outliers
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.rows()
    }

    pub fn n_outliers(&self) -> usize {
        self.outliers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Inner products of `q` with every centroid and every admitted outlier.
    pub fn scores(&self, q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if q.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        let c = self.centroids.iter_rows().map(|r| dot(q, r)).collect();
        let o = self.outliers.iter_rows().map(|r| dot(q, r)).collect();
        Ok((c, o))
    }

    /// `Φ_k ← m·Φ_k + (1 − m)·selected`, then re-normalized.
    pub fn momentum_update(&mut self, class_id: usize, selected: &[f64]) -> Result<()> {
        let n = self.n_clusters();
        if class_id >= n {
            return Err(Error::InvalidClass { id: class_id, n });
        }
        if selected.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: selected.len(),
            });
        }
        let m = self.momentum;
        let mut row: Vec<f64> = self
            .centroids
            .row(class_id)
            .iter()
            .zip(selected)
            .map(|(c, s)| m * c + (1.0 - m) * s)
            .collect();
        // Antipodal cancellation leaves nothing to normalize; keep the old entry.
        if l2_normalize_in_place(&mut row).is_err() {
            return Ok(());
        }
        self.centroids.set_row(class_id, &row)
    }

    /// Replaces the outlier bank wholesale.
    pub fn set_outlier_bank(&mut self, admitted: EmbeddingMatrix) -> Result<()> {
        if admitted.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: admitted.dim(),
            });
        }
        self.outliers = require_unit(admitted)?;
        Ok(())
    }
}

fn check_params(momentum: f64, temperature: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::InvalidParam(format!("momentum {momentum} not in [0, 1]")));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidParam(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    Ok(())
}

fn require_unit(mut m: EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if !m.is_normalized() {
        m.mark_normalized()?;
    }
    Ok(m)
}

/// Mean of each cluster's member embeddings (summed in ascending index
/// order), before normalization.
pub fn cluster_means(embeddings: &EmbeddingMatrix, labeling: &PseudoLabeling) -> Result<Vec<Vec<f64>>> {
    if labeling.len() != embeddings.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} embeddings",
            labeling.len(),
            embeddings.rows()
        )));
    }
    let dim = embeddings.dim();
    let mut sums = vec![vec![0.0; dim]; labeling.n_clusters()];
    let mut counts = vec![0usize; labeling.n_clusters()];
    for (i, &l) in labeling.labels().iter().enumerate() {
        if l >= 0 {
            let k = l as usize;
            counts[k] += 1;
            for (s, x) in sums[k].iter_mut().zip(embeddings.row(i)) {
                *s += x;
            }
        }
    }
    for (k, (s, &c)) in sums.iter_mut().zip(&counts).enumerate() {
        if c == 0 {
            return Err(Error::InvalidParam(format!("cluster {k} has no members")));
        }
        s.iter_mut().for_each(|x| *x /= c as f64);
    }
    Ok(sums)
}

/// Initializes the memory with normalized cluster means and an empty outlier
/// bank.
pub fn init_memory(
    embeddings: &EmbeddingMatrix,
    labeling: &PseudoLabeling,
    momentum: f64,
    temperature: f64,
) -> Result<ClusterMemory> {
    check_params(momentum, temperature)?;
    if labeling.n_clusters() == 0 {
        return Err(Error::Empty("labeling has no clusters"));
    }
    let mut means = cluster_means(embeddings, labeling)?;
    for (k, m) in means.iter_mut().enumerate() {
        if norm(m) <= UNIT_TOL {
            return Err(Error::InvalidParam(format!("cluster {k} mean is the zero vector")));
        }
        l2_normalize_in_place(m)?;
    }
    let centroids = EmbeddingMatrix::from_unit_rows(embeddings.dim(), &means)?;
    ClusterMemory::from_centroids(centroids, momentum, temperature)
}
