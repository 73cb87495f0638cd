use candle_core::{DType, Tensor};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{host_tensor, EncoderLayer, Init, Linear, ParamStore};
use crate::rng::{gaussian_vec, seeded};

/// Width of the hashed token vectors.
pub const TEXT_DIM: usize = 512;

/// Turns a prompt into a sequence of fixed-width token vectors.
///
/// Any sentence encoder fits behind this interface; one returning a single
/// pooled vector simply yields a sequence of length one.
pub trait TextEncoder {
    fn dim(&self) -> usize;

    fn encode_tokens(&self, prompt: &str) -> Vec<Vec<f64>>;

    /// Sum of the token vectors; all zeros for a prompt without tokens.
    fn base_embedding(&self, prompt: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for token in self.encode_tokens(prompt) {
            for (o, v) in out.iter_mut().zip(token) {
                *o += v;
            }
        }
        out
    }
}

/// Deterministic bag-of-tokens encoder: each lowercase word maps to a
/// Gaussian vector seeded by a hash of the word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashedBagOfTokens {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashedBagOfTokens {
    fn default() -> Self {
        Self { dim: TEXT_DIM, seed: 0 }
    }
}

pub fn tokenize(prompt: &str) -> Vec<String> {
    prompt
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl HashedBagOfTokens {
    fn token_vector(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::digest(token.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        let mut rng = seeded(u64::from_le_bytes(bytes) ^ self.seed);
        let scale = 1.0 / (self.dim as f64).sqrt();
        gaussian_vec(&mut rng, self.dim).into_iter().map(|v| v * scale).collect()
    }
}

impl TextEncoder for HashedBagOfTokens {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_tokens(&self, prompt: &str) -> Vec<Vec<f64>> {
        tokenize(prompt).iter().map(|t| self.token_vector(t)).collect()
    }
}

/// Padded token vectors of a batch plus the text gate `m_c`.
#[derive(Debug, Clone)]
pub struct TextBatch {
    /// `[B, T, dim]`
    pub tokens: Tensor,
    /// Additive attention bias `[B, 1, 1, T]`; padding positions get a large negative value.
    pub key_bias: Tensor,
    /// Pooling weights `[B, T, 1]`, summing to one over valid tokens.
    pub pool: Tensor,
    /// `[B, 1]`, 1 where text conditions the sample.
    pub gate: Tensor,
}

impl TextBatch {
    /// `gates[i]` is forced to 0 for samples without tokens.
    pub fn new(sequences: &[Vec<Vec<f64>>], gates: &[bool], dim: usize, dtype: DType) -> Result<Self> {
        let b = sequences.len();
        if gates.len() != b || b == 0 {
            return Err(Error::ShapeMismatch("text batch sizes differ".into()));
        }
        let t = sequences.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut tokens = vec![0.0; b * t * dim];
        let mut bias = vec![0.0; b * t];
        let mut pool = vec![0.0; b * t];
        let mut gate = vec![0.0; b];
        for (i, seq) in sequences.iter().enumerate() {
            if seq.iter().any(|v| v.len() != dim) {
                return Err(Error::ShapeMismatch(format!("token vectors must have width {dim}")));
            }
            let len = seq.len().max(1);
            for (k, v) in seq.iter().enumerate() {
                tokens[(i * t + k) * dim..(i * t + k + 1) * dim].copy_from_slice(v);
            }
            for k in 0..t {
                if k < len {
                    pool[i * t + k] = 1.0 / len as f64;
                } else {
                    bias[i * t + k] = -1e9;
                }
            }
            gate[i] = if gates[i] && !seq.is_empty() { 1.0 } else { 0.0 };
        }
        Ok(Self {
            tokens: host_tensor(tokens, &[b, t, dim], dtype)?,
            key_bias: host_tensor(bias, &[b, 1, 1, t], dtype)?,
            pool: host_tensor(pool, &[b, t, 1], dtype)?,
            gate: host_tensor(gate, &[b, 1], dtype)?,
        })
    }
}

/// Trainable text pathway: projection, two encoder layers, masked mean pool.
#[derive(Debug, Clone)]
pub struct TextConditioner {
    proj: Linear,
    layers: Vec<EncoderLayer>,
}

impl TextConditioner {
    pub fn new(
        store: &mut ParamStore,
        dim: usize,
        latent: usize,
        heads: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let proj = Linear::new(store, "text.proj", dim, latent, Init::FanIn(1.0), rng)?;
        let layers = (0..layers)
            .map(|i| EncoderLayer::new(store, &format!("text.layers.{i}"), latent, heads, rng))
            .collect::<Result<_>>()?;
        Ok(Self { proj, layers })
    }

    /// Condition vectors `[B, latent]`, exactly zero where the gate is 0.
    pub fn forward(&self, text: &TextBatch) -> Result<Tensor> {
        let mut h = self.proj.forward(&text.tokens)?;
        for layer in &self.layers {
            h = layer.forward(&h, Some(&text.key_bias))?;
        }
        let pooled = h.broadcast_mul(&text.pool)?.sum(1)?;
        Ok(pooled.broadcast_mul(&text.gate)?)
    }
}
