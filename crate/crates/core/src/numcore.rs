//! Dense vector primitives and the row-major embedding bank.
//!
//! Every reduction here runs left to right over the input so results are
//! bit-stable regardless of how callers schedule work across threads.

use crate::error::{Error, Result};

/// Tolerance used when checking that a row is unit-norm.
pub const UNIT_TOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Returns `v / ‖v‖`. Zero (or non-finite) norms are rejected instead of
/// producing NaN.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    l2_normalize_in_place(&mut out)?;
    Ok(out)
}

pub fn l2_normalize_in_place(v: &mut [f64]) -> Result<f64> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(n)
}

/// Cosine similarity of two unit vectors, i.e. their inner product.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(dot(a, b))
}

/// `log Σ exp(xᵢ)` with a max shift so nothing overflows.
pub fn logsumexp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("logsumexp"));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logsumexp input"));
    }
    if xs.len() == 1 {
        return Ok(xs[0]);
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    for x in xs {
        acc += (x - max).exp();
    }
    Ok(max + acc.ln())
}

/// Numerically stable softmax over `xs`.
pub fn softmax(xs: &[f64]) -> Result<Vec<f64>> {
    let lse = logsumexp(xs)?;
    Ok(xs.iter().map(|x| (x - lse).exp()).collect())
}

/// Row-major bank of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Wraps raw row-major data. Rejects zero `dim` and non-finite entries.
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("embedding dim must be >= 1".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "{} values cannot fill {rows} x {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding entry"));
        }
        Ok(Self {
            rows,
            dim,
            data,
            normalized: false,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(0, dim, Vec::new())
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    /// Like [`EmbeddingMatrix::from_rows`] but checks every row is unit-norm
    /// and marks the result normalized.
    pub fn from_unit_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut m = Self::from_rows(dim, rows)?;
        m.mark_normalized()?;
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Copy with every row scaled to unit length.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.dim).enumerate() {
            l2_normalize_in_place(row).map_err(|_| Error::ZeroActivation { row: i })?;
        }
        Ok(Self {
            rows: self.rows,
            dim: self.dim,
            data,
            normalized: true,
        })
    }

    /// Sets the normalized flag after verifying each row's norm.
    pub fn mark_normalized(&mut self) -> Result<()> {
        for (i, row) in self.iter_rows().enumerate() {
            if (norm(row) - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidParam(format!("row {i} is not unit-norm")));
            }
        }
        self.normalized = true;
        Ok(())
    }

    /// Gathers the given rows (in order) into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            dim: self.dim,
            data,
            normalized: self.normalized,
        }
    }

    /// Overwrites row `i`. On a normalized matrix the new row must be unit-norm.
    pub fn set_row(&mut self, i: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("row value"));
        }
        if self.normalized && (norm(values) - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidParam(format!("row {i} is not unit-norm")));
        }
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(values);
        Ok(())
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}
