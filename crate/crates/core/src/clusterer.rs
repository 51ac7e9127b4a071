//! DBSCAN over cosine distance, producing pseudo-labels and the outlier set.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numcore::{dot, EmbeddingMatrix};

pub const OUTLIER: i64 = -1;

/// Cluster id per sample, `-1` for outliers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabeling {
    labels: Vec<i64>,
    n_clusters: usize,
    outlier_indices: Vec<usize>,
}

impl PseudoLabeling {
    /// Builds a labeling from raw ids. Cluster ids must be dense: every id in
    /// `0..n_clusters` must be used.
    pub fn from_labels(labels: Vec<i64>) -> Result<Self> {
        let mut n_clusters = 0usize;
        let mut outliers = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            match l {
                OUTLIER => outliers.push(i),
                l if l >= 0 => n_clusters = n_clusters.max(l as usize + 1),
                l => return Err(Error::InvalidParam(format!("label {l} at {i} is below -1"))),
            }
        }
        let mut seen = vec![false; n_clusters];
        for &l in &labels {
            if l >= 0 {
                seen[l as usize] = true;
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParam(format!("cluster id {k} has no members")));
        }
        Ok(Self {
            labels,
            n_clusters,
            outlier_indices: outliers,
        })
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Sorted indices of outliers.
    pub fn outlier_indices(&self) -> &[usize] {
        &self.outlier_indices
    }

    pub fn n_clustered(&self) -> usize {
        self.labels.len() - self.outlier_indices.len()
    }

    /// Member indices of every cluster, ascending within each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    /// `index,label` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(s, "{i},{l}");
        }
        s
    }
}

/// Indices `j` (ascending, self included) with `1 − ⟨xᵢ, xⱼ⟩ ≤ eps`.
pub fn neighborhoods(embeddings: &EmbeddingMatrix, eps: f64) -> Vec<Vec<usize>> {
    let n = embeddings.rows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = embeddings.row(i);
            (0..n).filter(|&j| 1.0 - dot(xi, embeddings.row(j)) <= eps).collect()
        })
        .collect()
}

/// DBSCAN with cosine distance. Points are scanned in ascending index order
/// and a border point joins the first cluster whose expansion reaches it.
pub fn dbscan(embeddings: &EmbeddingMatrix, eps: f64, min_pts: usize) -> Result<PseudoLabeling> {
    check_inputs(embeddings, eps, min_pts)?;
    dbscan_with_neighborhoods(&neighborhoods(embeddings, eps), min_pts)
}

fn check_inputs(embeddings: &EmbeddingMatrix, eps: f64, min_pts: usize) -> Result<()> {
    if embeddings.is_empty() {
        return Err(Error::Empty("dbscan input"));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParam(format!("eps must be > 0, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidParam("min_pts must be >= 1".into()));
    }
    if !embeddings.is_normalized() {
        return Err(Error::InvalidParam("dbscan expects normalized embeddings".into()));
    }
    Ok(())
}

/// Core DBSCAN expansion over precomputed eps-neighbourhoods (self included).
/// Points are scanned in ascending index order; a border point joins the
/// first cluster that reaches it.
pub fn dbscan_with_neighborhoods(nbrs: &[Vec<usize>], min_pts: usize) -> Result<PseudoLabeling> {
    const UNVISITED: i64 = -2;
    let n = nbrs.len();
    let mut labels = vec![UNVISITED; n];
    let mut cluster: i64 = 0;
    let mut queue = VecDeque::new();

    for p in 0..n {
        if labels[p] != UNVISITED {
            continue;
        }
        if nbrs[p].len() < min_pts {
            labels[p] = OUTLIER;
            continue;
        }
        labels[p] = cluster;
        queue.extend(nbrs[p].iter().copied().filter(|&q| q != p));
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                OUTLIER => labels[q] = cluster,
                UNVISITED => {
                    labels[q] = cluster;
                    if nbrs[q].len() >= min_pts {
                        queue.extend(nbrs[q].iter().copied());
                    }
                }
                _ => {}
            }
        }
        cluster += 1;
    }
    PseudoLabeling::from_labels(labels)
}
