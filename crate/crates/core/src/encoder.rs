//! Toy trainable encoder: affine layers (tanh between them) followed by L2
//! normalization, with a hand-written backward pass, AdamW and an EMA teacher.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numcore::{dot, EmbeddingMatrix};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AICP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Standard deviation of the Gaussian jitter added to the identity init.
pub const INIT_JITTER: f64 = 0.01;

/// One affine layer. `weight` is `in_dim x out_dim`, row-major, so the layer
/// computes `y[j] = Σ_i x[i] * weight[i][j] + bias[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Top-left identity block plus seeded jitter; zero bias.
    fn identity_padded(in_dim: usize, out_dim: usize, jitter: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        for i in 0..in_dim {
            for j in 0..out_dim {
                let base = if i == j { 1.0 } else { 0.0 };
                let e: f64 = rng.sample(StandardNormal);
                layer.weight[i * out_dim + j] = base + jitter * e;
            }
        }
        layer
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            let w = &self.weight[i * self.out_dim..(i + 1) * self.out_dim];
            for (o, wij) in out.iter_mut().zip(w) {
                *o += xi * wij;
            }
        }
    }
}

/// Encoder parameters θ. One layer by default; two layers means a tanh
/// hidden layer sits in between.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Dense>,
}

impl EncoderParams {
    pub fn init(raw_dim: usize, out_dim: usize, hidden: Option<usize>, seed: u64) -> Result<Self> {
        if raw_dim == 0 || out_dim == 0 || hidden == Some(0) {
            return Err(Error::InvalidParam("encoder dims must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = match hidden {
            None => vec![Dense::identity_padded(raw_dim, out_dim, INIT_JITTER, &mut rng)],
            Some(h) => vec![
                Dense::identity_padded(raw_dim, h, INIT_JITTER, &mut rng),
                Dense::identity_padded(h, out_dim, INIT_JITTER, &mut rng),
            ],
        };
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape("encoder parameter shapes differ".into()))
        }
    }

    /// Flat views of every tensor, weights before biases, layer by layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Encodes one raw row. Returns the per-layer inputs and the
    /// pre-normalization output.
    fn forward_row(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim];
            layer.apply(&cur, &mut out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut cur, out));
        }
        (inputs, cur)
    }
}

/// Activations kept from a forward pass for use in [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `layer_inputs[r][l]` is the input row `r` fed to layer `l`.
    layer_inputs: Vec<Vec<Vec<f64>>>,
    /// Norm of each pre-normalization output row.
    norms: Vec<f64>,
    pub embeddings: EmbeddingMatrix,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.norms.len()
    }

    /// Pre-normalization output norms.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }
}

/// Encodes and normalizes every row of `raw`, keeping activations.
pub fn forward_cached(params: &EncoderParams, raw: &EmbeddingMatrix) -> Result<ForwardCache> {
    if raw.dim() != params.in_dim() {
        return Err(Error::DimMismatch {
            expected: params.in_dim(),
            got: raw.dim(),
        });
    }
    let per_row: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..raw.rows())
        .into_par_iter()
        .map(|r| params.forward_row(raw.row(r)))
        .collect();

    let out_dim = params.out_dim();
    let mut data = Vec::with_capacity(raw.rows() * out_dim);
    let mut norms = Vec::with_capacity(raw.rows());
    let mut layer_inputs = Vec::with_capacity(raw.rows());
    for (r, (inputs, y)) in per_row.into_iter().enumerate() {
        let n = dot(&y, &y).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroActivation { row: r });
        }
        data.extend(y.iter().map(|v| v / n));
        norms.push(n);
        layer_inputs.push(inputs);
    }
    let mut embeddings = EmbeddingMatrix::new(raw.rows(), out_dim, data)?;
    embeddings.mark_normalized()?;
    Ok(ForwardCache {
        layer_inputs,
        norms,
        embeddings,
    })
}

/// Encodes and normalizes every row of `raw`.
pub fn forward(params: &EncoderParams, raw: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    forward_cached(params, raw).map(|c| c.embeddings)
}

/// Gradients of a loss with respect to the parameters, given the gradient
/// with respect to the normalized embeddings. Rows are accumulated in order.
pub fn backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_embeddings: &EmbeddingMatrix,
) -> Result<EncoderParams> {
    let out_dim = params.out_dim();
    if grad_embeddings.rows() != cache.rows() || grad_embeddings.dim() != out_dim {
        return Err(Error::Shape(format!(
            "upstream gradient is {} x {}, forward produced {} x {}",
            grad_embeddings.rows(),
            grad_embeddings.dim(),
            cache.rows(),
            out_dim
        )));
    }
    if cache
        .layer_inputs
        .first()
        .is_some_and(|i| i.len() != params.layers.len())
    {
        return Err(Error::Shape("cache was produced by a different encoder".into()));
    }

    let mut grads = params.zeros_like();
    let last = params.layers.len() - 1;
    for r in 0..cache.rows() {
        let z = cache.embeddings.row(r);
        let g = grad_embeddings.row(r);
        // Jacobian of y / ‖y‖ is (I − z zᵀ) / ‖y‖.
        let radial = dot(z, g);
        let mut delta: Vec<f64> = g
            .iter()
            .zip(z)
            .map(|(gi, zi)| (gi - zi * radial) / cache.norms[r])
            .collect();

        for l in (0..=last).rev() {
            let layer = &params.layers[l];
            let input = &cache.layer_inputs[r][l];
            let gl = &mut grads.layers[l];
            for (i, &xi) in input.iter().enumerate() {
                let row = &mut gl.weight[i * layer.out_dim..(i + 1) * layer.out_dim];
                for (w, d) in row.iter_mut().zip(&delta) {
                    *w += xi * d;
                }
            }
            for (b, d) in gl.bias.iter_mut().zip(&delta) {
                *b += d;
            }
            if l > 0 {
                // input = tanh(previous pre-activation)
                delta = (0..layer.in_dim)
                    .map(|i| {
                        let w = &layer.weight[i * layer.out_dim..(i + 1) * layer.out_dim];
                        dot(w, &delta) * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
    }
    Ok(grads)
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    first: EncoderParams,
    second: EncoderParams,
}

impl AdamState {
    pub fn new(params: &EncoderParams, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams) -> Result<()> {
        params.check_shape(grads)?;
        params.check_shape(&self.first)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);

        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p[i]);
            }
        }
        Ok(())
    }
}

/// EMA copy of the student.
#[derive(Debug, Clone)]
pub struct TeacherState {
    pub params: EncoderParams,
    pub ema_rate: f64,
}

impl TeacherState {
    pub fn new(student: &EncoderParams, ema_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ema_rate) {
            return Err(Error::InvalidParam(format!("ema_rate {ema_rate} not in [0, 1)")));
        }
        Ok(Self {
            params: student.clone(),
            ema_rate,
        })
    }

    /// `teacher ← rate·teacher + (1 − rate)·student`, elementwise.
    pub fn ema_update(&mut self, student: &EncoderParams) -> Result<()> {
        self.params.check_shape(student)?;
        let rate = self.ema_rate;
        for (t, s) in self.params.tensors_mut().into_iter().zip(student.tensors()) {
            for (ti, si) in t.iter_mut().zip(s) {
                *ti = rate * *ti + (1.0 - rate) * si;
            }
        }
        Ok(())
    }
}

/// Serializes parameters as `AICP`: magic, u32 version, u32 layer count, then
/// per layer u32 in_dim and u32 out_dim, then every layer's weight followed by
/// its bias as little-endian f64.
pub fn encode_checkpoint(params: &EncoderParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for l in &params.layers {
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
    }
    for t in params.tensors() {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EncoderParams> {
    let take_u32 = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or(Error::Truncated {
                expected: at + 4,
                found: bytes.len(),
            })
    };
    let found: [u8; 4] = bytes
        .get(..4)
        .ok_or(Error::Truncated {
            expected: 4,
            found: bytes.len(),
        })?
        .try_into()
        .expect("4 bytes");
    if found != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found,
        });
    }
    let version = take_u32(4)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::BadVersion(version));
    }
    let n_layers = take_u32(8)? as usize;
    if n_layers == 0 {
        return Err(Error::Shape("checkpoint has no layers".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    let mut at = 12;
    for _ in 0..n_layers {
        let (i, o) = (take_u32(at)?, take_u32(at + 4)?);
        for d in [i, o] {
            if d == 0 {
                return Err(Error::BadDim(d));
            }
        }
        layers.push(Dense::zeros(i as usize, o as usize));
        at += 8;
    }
    let mut params = EncoderParams { layers };
    let total: usize = params.tensors().iter().map(|t| t.len()).sum();
    let expected = at + total * 8;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let mut values = bytes[at..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = values.next().expect("length checked");
        }
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
