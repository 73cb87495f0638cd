//! Small differentiable building blocks on top of candle tensors.

use candle_core::{DType, Tensor, D};
use rand::Rng;

use super::params::{Init, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.create(&format!("{name}.weight"), &[out_dim, in_dim], init, rng)?;
        let bias = store.create(&format!("{name}.bias"), &[out_dim], Init::Zeros, rng)?;
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// Applies the map along the last dimension of a tensor of any rank.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let rows: usize = dims[..dims.len() - 1].iter().product();
        let flat = x.reshape((rows, self.in_dim))?;
        let y = flat.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?;
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.out_dim;
        Ok(y.reshape(out_dims)?)
    }
}

/// Layer normalization over the last dimension without learned affine terms.
pub fn layer_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(centered.broadcast_div(&(var + eps)?.sqrt()?)?)
}

/// `x * (1 + scale) + shift` with broadcasting.
pub fn modulate(x: &Tensor, shift: &Tensor, scale: &Tensor) -> Result<Tensor> {
    Ok(x.broadcast_mul(&(scale + 1.0)?)?.broadcast_add(shift)?)
}

pub fn silu(x: &Tensor) -> Result<Tensor> {
    Ok((x * candle_nn::ops::sigmoid(x)?)?)
}

/// Sinusoidal embedding of integer positions, `[positions.len(), dim]`.
pub fn sinusoidal(positions: &[f64], dim: usize, dtype: DType) -> Result<Tensor> {
    let half = dim / 2;
    let mut values = Vec::with_capacity(positions.len() * dim);
    for &p in positions {
        for i in 0..dim {
            let k = (i % half.max(1)) as f64;
            let freq = (-(10000f64.ln()) * k / half.max(1) as f64).exp();
            values.push(if i < half { (p * freq).sin() } else { (p * freq).cos() });
        }
    }
    Ok(Tensor::from_vec(values, (positions.len(), dim), &candle_core::Device::Cpu)?.to_dtype(dtype)?)
}

/// Multi-head self-attention over the middle axis of `[S, L, C]`.
#[derive(Debug, Clone)]
pub struct Attention {
    qkv: Linear,
    out: Linear,
    heads: usize,
    dim: usize,
}

impl Attention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * dim, Init::FanIn(1.0), rng)?,
            out: Linear::new(store, &format!("{name}.out"), dim, dim, Init::FanIn(1.0), rng)?,
            heads,
            dim,
        })
    }

    /// `key_bias`, when given, is added to the attention logits (`[S, 1, 1, L]`).
    pub fn forward(&self, x: &Tensor, key_bias: Option<&Tensor>) -> Result<Tensor> {
        let (s, l, _) = x.dims3()?;
        let hd = self.dim / self.heads;
        let qkv = self.qkv.forward(x)?.reshape((s, l, 3, self.heads, hd))?;
        let split = |i: usize| -> Result<Tensor> {
            Ok(qkv.narrow(2, i, 1)?.squeeze(2)?.transpose(1, 2)?.contiguous()?)
        };
        let (q, k, v) = (split(0)?, split(1)?, split(2)?);
        let mut logits = (q.matmul(&k.t()?.contiguous()?)? / (hd as f64).sqrt())?;
        if let Some(bias) = key_bias {
            logits = logits.broadcast_add(bias)?;
        }
        let weights = candle_nn::ops::softmax(&logits, D::Minus1)?;
        let y = weights
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((s, l, self.dim))?;
        self.out.forward(&y)
    }
}

/// Two-layer GELU feed-forward network.
#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, Init::FanIn(1.0), rng)?,
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, Init::FanIn(1.0), rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.gelu_erf()?)
    }
}

/// Pre-norm transformer encoder layer (used by the text pathway).
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    attn: Attention,
    ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            attn: Attention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, 4 * dim, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor, key_bias: Option<&Tensor>) -> Result<Tensor> {
        let x = (x + self.attn.forward(&layer_norm(x, 1e-6)?, key_bias)?)?;
        Ok((&x + self.ff.forward(&layer_norm(&x, 1e-6)?)?)?)
    }
}
