//! Synthetic identity-structured features and the `AICV` feature file format.
//!
//! Each identity gets a unit center on the identity subspace; each sample is
//! that center plus isotropic Gaussian noise, with a per-tag offset (a stand-in
//! for camera bias) written into the remaining coordinates.
//!
//! Randomness comes from ChaCha8 seeded with the spec seed. Identity `i` draws
//! from stream `i`, the tag offsets from a reserved stream, so the output is a
//! pure function of the spec.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numcore::{l2_normalize_in_place, EmbeddingMatrix};

pub const FEATURE_MAGIC: [u8; 4] = *b"AICV";
pub const FEATURE_VERSION: u32 = 1;

const OFFSET_STREAM: u64 = u64::MAX;
const HOLDOUT_STREAM_BASE: u64 = 1 << 40;

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub n_identities: usize,
    pub samples_per_identity: usize,
    pub raw_dim: usize,
    pub identity_dim: usize,
    /// Per-coordinate standard deviation of each tag's offset vector.
    pub nuisance_scale: f64,
    /// Per-coordinate standard deviation of the identity-space noise.
    pub noise_scale: f64,
    pub n_tags: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_identities: 50,
            samples_per_identity: 20,
            raw_dim: 64,
            identity_dim: 32,
            nuisance_scale: 0.5,
            noise_scale: 0.1,
            n_tags: 6,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_identities == 0 || self.samples_per_identity == 0 {
            return Err(Error::InvalidParam(
                "n_identities * samples_per_identity must be positive".into(),
            ));
        }
        if self.raw_dim == 0 || self.identity_dim == 0 || self.identity_dim > self.raw_dim {
            return Err(Error::InvalidParam(format!(
                "need 1 <= identity_dim ({}) <= raw_dim ({})",
                self.identity_dim, self.raw_dim
            )));
        }
        for (name, v) in [
            ("nuisance_scale", self.nuisance_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParam(format!("{name} must be finite and >= 0")));
            }
        }
        if self.n_tags == 0 {
            return Err(Error::InvalidParam("n_tags must be >= 1".into()));
        }
        Ok(())
    }
}

/// Unnormalized raw features with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub features: EmbeddingMatrix,
    pub true_ids: Vec<usize>,
    pub nuisance_tag: Vec<u32>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.true_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_ids.is_empty()
    }
}

/// Generates the training dataset described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<RawDataset> {
    generate_from_streams(spec, 0)
}

/// Generates a disjoint set of identities that shares the tag offsets of
/// `generate(spec)`. Used as the evaluation split.
pub fn generate_holdout(spec: &SynthSpec) -> Result<RawDataset> {
    generate_from_streams(spec, HOLDOUT_STREAM_BASE)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn tag_offsets(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let nuisance_dim = spec.raw_dim - spec.identity_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(OFFSET_STREAM);
    (0..spec.n_tags)
        .map(|_| {
            gaussian_vec(&mut rng, nuisance_dim)
                .into_iter()
                .map(|x| spec.nuisance_scale * x)
                .collect()
        })
        .collect()
}

fn generate_from_streams(spec: &SynthSpec, stream_base: u64) -> Result<RawDataset> {
    spec.validate()?;
    let n = spec.n_identities * spec.samples_per_identity;
    let offsets = tag_offsets(spec);
    let mut data = Vec::with_capacity(n * spec.raw_dim);
    let mut true_ids = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);

    for id in 0..spec.n_identities {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream_base + id as u64);
        let mut center = gaussian_vec(&mut rng, spec.identity_dim);
        // A zero Gaussian draw has probability zero; fall back to an axis.
        if l2_normalize_in_place(&mut center).is_err() {
            center[0] = 1.0;
        }
        for _ in 0..spec.samples_per_identity {
            let tag = rng.random_range(0..spec.n_tags);
            for c in &center {
                let e: f64 = rng.sample(StandardNormal);
                data.push(c + spec.noise_scale * e);
            }
            data.extend_from_slice(&offsets[tag]);
            true_ids.push(id);
            tags.push(tag as u32);
        }
    }

    Ok(RawDataset {
        features: EmbeddingMatrix::new(n, spec.raw_dim, data)?,
        true_ids,
        nuisance_tag: tags,
    })
}

/// Serializes a matrix (and optional labels) in the `AICV` layout:
/// magic, u32 version, u32 rows, u32 dim, u8 has_labels, f32 payload, i64 labels.
pub fn encode_features(matrix: &EmbeddingMatrix, labels: Option<&[i64]>) -> Result<Vec<u8>> {
    if let Some(l) = labels {
        if l.len() != matrix.rows() {
            return Err(Error::Shape(format!("{} labels for {} rows", l.len(), matrix.rows())));
        }
    }
    let rows = u32::try_from(matrix.rows()).map_err(|_| Error::Shape("too many rows".into()))?;
    let dim = u32::try_from(matrix.dim()).map_err(|_| Error::Shape("dim too large".into()))?;
    let mut out = Vec::with_capacity(17 + matrix.data().len() * 4 + labels.map_or(0, |l| l.len() * 8));
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.push(u8::from(labels.is_some()));
    for &x in matrix.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    if let Some(l) = labels {
        for &x in l {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Parses an `AICV` buffer.
pub fn decode_features(bytes: &[u8]) -> Result<(EmbeddingMatrix, Option<Vec<i64>>)> {
    const HEADER: usize = 17;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: HEADER,
            found: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4-byte slice");
    if found != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            expected: FEATURE_MAGIC,
            found,
        });
    }
    if bytes.len() < HEADER {
        return Err(Error::Truncated {
            expected: HEADER,
            found: bytes.len(),
        });
    }
    let version = read_u32(bytes, 4);
    if version != FEATURE_VERSION {
        return Err(Error::BadVersion(version));
    }
    let rows = read_u32(bytes, 8) as usize;
    let dim = read_u32(bytes, 12);
    if dim == 0 {
        return Err(Error::BadDim(dim));
    }
    let dim = dim as usize;
    let has_labels = match bytes[16] {
        0 => false,
        1 => true,
        other => return Err(Error::Shape(format!("has_labels byte must be 0 or 1, got {other}"))),
    };
    let payload = rows * dim * 4;
    let expected = HEADER + payload + if has_labels { rows * 8 } else { 0 };
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Shape(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let data = bytes[HEADER..HEADER + payload]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
        .collect();
    let matrix = EmbeddingMatrix::new(rows, dim, data)?;
    let labels = has_labels.then(|| {
        bytes[HEADER + payload..]
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect()
    });
    Ok((matrix, labels))
}

pub fn write_features(path: &Path, matrix: &EmbeddingMatrix, labels: Option<&[i64]>) -> Result<()> {
    let bytes = encode_features(matrix, labels)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<(EmbeddingMatrix, Option<Vec<i64>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
