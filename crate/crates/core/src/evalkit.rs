//! Retrieval metrics (mAP, CMC) and clustering agreement (ARI, NMI).

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numcore::{dot, EmbeddingMatrix};

/// Query and gallery embeddings with identity labels.
#[derive(Debug, Clone)]
pub struct RetrievalSplit {
    pub query: EmbeddingMatrix,
    pub query_ids: Vec<i64>,
    pub gallery: EmbeddingMatrix,
    pub gallery_ids: Vec<i64>,
    /// Optional camera tags; only consulted when `exclude_same_camera` is set.
    pub query_cams: Option<Vec<u32>>,
    pub gallery_cams: Option<Vec<u32>>,
    /// Drop gallery items sharing both identity and camera with the query.
    pub exclude_same_camera: bool,
}

impl RetrievalSplit {
    pub fn new(query: EmbeddingMatrix, query_ids: Vec<i64>, gallery: EmbeddingMatrix, gallery_ids: Vec<i64>) -> Self {
        Self {
            query,
            query_ids,
            gallery,
            gallery_ids,
            query_cams: None,
            gallery_cams: None,
            exclude_same_camera: false,
        }
    }

    /// Splits one labelled set: within each identity (in index order) the
    /// first `queries_per_id` samples become queries, the rest gallery.
    pub fn by_identity(
        features: &EmbeddingMatrix,
        ids: &[i64],
        cams: Option<&[u32]>,
        queries_per_id: usize,
    ) -> Result<Self> {
        if ids.len() != features.rows() {
            return Err(Error::Shape(format!("{} ids for {} rows", ids.len(), features.rows())));
        }
        let mut seen: HashMap<i64, usize> = HashMap::new();
        let (mut q, mut g) = (Vec::new(), Vec::new());
        for (i, &id) in ids.iter().enumerate() {
            let c = seen.entry(id).or_insert(0);
            if *c < queries_per_id {
                q.push(i);
            } else {
                g.push(i);
            }
            *c += 1;
        }
        let pick_ids = |idx: &[usize]| idx.iter().map(|&i| ids[i]).collect::<Vec<_>>();
        let pick_cams = |idx: &[usize]| cams.map(|c| idx.iter().map(|&i| c[i]).collect::<Vec<_>>());
        Ok(Self {
            query: features.select_rows(&q),
            query_ids: pick_ids(&q),
            gallery: features.select_rows(&g),
            gallery_ids: pick_ids(&g),
            query_cams: pick_cams(&q),
            gallery_cams: pick_cams(&g),
            exclude_same_camera: false,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.query.rows() != self.query_ids.len() || self.gallery.rows() != self.gallery_ids.len() {
            return Err(Error::Shape("ids do not match embedding rows".into()));
        }
        if self.query.dim() != self.gallery.dim() {
            return Err(Error::DimMismatch {
                expected: self.query.dim(),
                got: self.gallery.dim(),
            });
        }
        if self.query.is_empty() {
            return Err(Error::Empty("query set"));
        }
        if self.exclude_same_camera && (self.query_cams.is_none() || self.gallery_cams.is_none()) {
            return Err(Error::InvalidParam("camera exclusion needs camera tags".into()));
        }
        Ok(())
    }

    /// Relevance flags of the ranked gallery for query `qi`, excluded items removed.
    fn ranked_relevance(&self, qi: usize) -> Result<Vec<bool>> {
        let q = self.query.row(qi);
        let qid = self.query_ids[qi];
        let qcam = self.query_cams.as_ref().map(|c| c[qi]);
        let mut cand: Vec<(usize, f64)> = (0..self.gallery.rows())
            .filter(|&g| {
                !(self.exclude_same_camera
                    && self.gallery_ids[g] == qid
                    && self.gallery_cams.as_ref().map(|c| c[g]) == qcam)
            })
            .map(|g| (g, dot(q, self.gallery.row(g))))
            .collect();
        cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        let rel: Vec<bool> = cand.iter().map(|&(g, _)| self.gallery_ids[g] == qid).collect();
        if !rel.iter().any(|&r| r) {
            return Err(Error::NoGalleryMatch { query: qi });
        }
        Ok(rel)
    }

    fn per_query<T: Send>(&self, f: impl Fn(&[bool]) -> T + Sync) -> Result<Vec<T>> {
        self.validate()?;
        (0..self.query.rows())
            .into_par_iter()
            .map(|qi| self.ranked_relevance(qi).map(|r| f(&r)))
            .collect()
    }
}

fn average_precision(rel: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &r) in rel.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / hits as f64
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean over queries of the average precision of the ranked gallery.
pub fn mean_ap(split: &RetrievalSplit) -> Result<f64> {
    Ok(mean(&split.per_query(average_precision)?))
}

/// Fraction of queries whose first correct match ranks within each `k`.
pub fn cmc(split: &RetrievalSplit, ks: &[usize]) -> Result<Vec<f64>> {
    let first = split.per_query(|rel| rel.iter().position(|&r| r).expect("has a match"))?;
    let n = first.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| first.iter().filter(|&&p| p < k).count() as f64 / n)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalMetrics {
    pub map: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
}

impl RetrievalMetrics {
    pub fn csv_header() -> &'static str {
        "map,rank1,rank5,rank10"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.map, self.rank1, self.rank5, self.rank10)
    }
}

pub fn evaluate(split: &RetrievalSplit) -> Result<RetrievalMetrics> {
    let map = mean_ap(split)?;
    let c = cmc(split, &[1, 5, 10])?;
    Ok(RetrievalMetrics {
        map,
        rank1: c[0],
        rank5: c[1],
        rank10: c[2],
    })
}

/// Maps labels to dense ids; every `-1` becomes its own singleton.
fn dense_labels(labels: &[i64]) -> Vec<usize> {
    let mut map = HashMap::new();
    let mut next = 0usize;
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                next += 1;
                next - 1
            } else {
                *map.entry(l).or_insert_with(|| {
                    next += 1;
                    next - 1
                })
            }
        })
        .collect()
}

struct Contingency {
    n: usize,
    a: Vec<usize>,
    b: Vec<usize>,
    /// Non-empty cells keyed by (label, truth), sorted.
    cells: Vec<((usize, usize), usize)>,
}

fn contingency(labels: &[i64], truth: &[i64]) -> Result<Contingency> {
    if labels.len() != truth.len() {
        return Err(Error::DimMismatch {
            expected: truth.len(),
            got: labels.len(),
        });
    }
    let la = dense_labels(labels);
    let lb = dense_labels(truth);
    let na = la.iter().max().map_or(0, |m| m + 1);
    let nb = lb.iter().max().map_or(0, |m| m + 1);
    let mut a = vec![0; na];
    let mut b = vec![0; nb];
    let mut cell: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in la.iter().zip(&lb) {
        a[x] += 1;
        b[y] += 1;
        *cell.entry((x, y)).or_insert(0) += 1;
    }
    let mut keys: Vec<_> = cell.into_iter().collect();
    keys.sort_unstable();
    Ok(Contingency {
        n: labels.len(),
        a,
        b,
        cells: keys,
    })
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Outliers (`-1`) count as singleton clusters.
pub fn ari(labels: &[i64], truth: &[i64]) -> Result<f64> {
    let t = contingency(labels, truth)?;
    if t.n < 2 {
        return Ok(1.0);
    }
    let index: f64 = t.cells.iter().map(|&(_, c)| comb2(c)).sum();
    let sa: f64 = t.a.iter().map(|&c| comb2(c)).sum();
    let sb: f64 = t.b.iter().map(|&c| comb2(c)).sum();
    let expected = sa * sb / comb2(t.n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization. Two
/// single-cluster labelings score 1.
pub fn nmi(labels: &[i64], truth: &[i64]) -> Result<f64> {
    let t = contingency(labels, truth)?;
    if t.n == 0 {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let ha = entropy(&t.a, n);
    let hb = entropy(&t.b, n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for &((x, y), c) in &t.cells {
        let pxy = c as f64 / n;
        mi += pxy * (pxy * n * n / (t.a[x] as f64 * t.b[y] as f64)).ln();
    }
    let denom = 0.5 * (ha + hb);
    Ok((mi / denom).clamp(0.0, 1.0))
}
