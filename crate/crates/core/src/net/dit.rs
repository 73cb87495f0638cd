use candle_core::{DType, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{layer_norm, modulate, silu, sinusoidal, Attention, FeedForward, Linear};
use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

/// Number of persons in every token grid.
pub const PERSONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
}

/// Denoiser architecture. The desk defaults are small enough for CPU training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub layers: usize,
    pub latent_dim: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub activation: Activation,
    pub temporal_attention: bool,
    /// Width D of the per-person, per-frame diffusion target.
    pub feature_dim: usize,
    /// Extra per-token input channels concatenated to the target (condition masks).
    pub extra_input_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            latent_dim: 128,
            heads: 8,
            ff_mult: 4,
            activation: Activation::Gelu,
            temporal_attention: true,
            feature_dim: crate::body::POSE_DIM,
            extra_input_dim: 1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("net.layers must be at least 1".into()));
        }
        if self.heads == 0 || self.latent_dim == 0 || self.latent_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "net.latent_dim {} must be a positive multiple of net.heads {}",
                self.latent_dim, self.heads
            )));
        }
        if self.feature_dim == 0 || self.ff_mult == 0 {
            return Err(Error::Config("net.feature_dim and net.ff_mult must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Block {
    modulation: Linear,
    spatial: Attention,
    temporal: Option<Attention>,
    ff: FeedForward,
}

/// DiT-style denoiser over `[B, P, N, D]` token grids.
///
/// Each block runs spatial attention across the two persons of every frame,
/// optional temporal attention across the frames of every person, and a
/// feed-forward layer. All three are pre-normalized with layer norms whose
/// shift and scale come from the conditioning vector. The output head is
/// zero-initialized, so an untrained network predicts exactly zero.
#[derive(Debug, Clone)]
pub struct DitNet {
    cfg: NetConfig,
    input: Linear,
    person: Tensor,
    time_in: Linear,
    time_out: Linear,
    blocks: Vec<Block>,
    final_modulation: Linear,
    head: Linear,
}

impl DitNet {
    pub fn new(cfg: &NetConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.latent_dim;
        let input = Linear::new(store, "input", cfg.feature_dim + cfg.extra_input_dim, l, Init::FanIn(1.0), rng)?;
        let person = store.create("person_embedding", &[PERSONS, l], Init::Normal(0.02), rng)?;
        let time_in = Linear::new(store, "time.in", l, l, Init::FanIn(1.0), rng)?;
        let time_out = Linear::new(store, "time.out", l, l, Init::FanIn(1.0), rng)?;
        let chunks = if cfg.temporal_attention { 6 } else { 4 };
        let mut blocks = Vec::with_capacity(cfg.layers);
        for i in 0..cfg.layers {
            let name = format!("blocks.{i}");
            blocks.push(Block {
                modulation: Linear::new(store, &format!("{name}.modulation"), l, chunks * l, Init::FanIn(0.1), rng)?,
                spatial: Attention::new(store, &format!("{name}.spatial"), l, cfg.heads, rng)?,
                temporal: if cfg.temporal_attention {
                    Some(Attention::new(store, &format!("{name}.temporal"), l, cfg.heads, rng)?)
                } else {
                    None
                },
                ff: FeedForward::new(store, &format!("{name}.ff"), l, cfg.ff_mult * l, rng)?,
            });
        }
        let final_modulation = Linear::new(store, "final.modulation", l, 2 * l, Init::FanIn(0.1), rng)?;
        let head = Linear::new(store, "head", l, cfg.feature_dim, Init::Zeros, rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            input,
            person,
            time_in,
            time_out,
            blocks,
            final_modulation,
            head,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// Embeds diffusion steps as `[B, latent]`.
    pub fn time_embedding(&self, timesteps: &[usize], dtype: DType) -> Result<Tensor> {
        let pos: Vec<f64> = timesteps.iter().map(|t| *t as f64).collect();
        let s = sinusoidal(&pos, self.cfg.latent_dim, dtype)?;
        self.time_out.forward(&silu(&self.time_in.forward(&s)?)?)
    }

    /// `tokens`: `[B, P, N, feature_dim + extra_input_dim]`; `cond`: `[B, latent]`.
    /// Returns `[B, P, N, feature_dim]`.
    pub fn forward(&self, tokens: &Tensor, timesteps: &[usize], cond: &Tensor) -> Result<Tensor> {
        let (b, p, n, d) = tokens.dims4()?;
        let l = self.cfg.latent_dim;
        if p != PERSONS || d != self.cfg.feature_dim + self.cfg.extra_input_dim {
            return Err(Error::ShapeMismatch(format!(
                "token grid {:?} does not match net input width {}",
                tokens.dims(),
                self.cfg.feature_dim + self.cfg.extra_input_dim
            )));
        }
        if timesteps.len() != b || cond.dims() != [b, l] {
            return Err(Error::ShapeMismatch(format!(
                "condition {:?} / {} timesteps for batch {b}",
                cond.dims(),
                timesteps.len()
            )));
        }
        let dtype = tokens.dtype();
        let frames: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let pe = sinusoidal(&frames, l, dtype)?.reshape((1, 1, n, l))?;
        let mut h = self
            .input
            .forward(tokens)?
            .broadcast_add(&pe)?
            .broadcast_add(&self.person.reshape((1, p, 1, l))?)?;
        let c = silu(&(self.time_embedding(timesteps, dtype)? + cond)?)?;
        for block in &self.blocks {
            let m = block.modulation.forward(&c)?;
            let chunk = |i: usize| -> Result<Tensor> { Ok(m.narrow(1, i * l, l)?.reshape((b, 1, 1, l))?) };
            // spatial: attend across persons within each frame
            let x = modulate(&layer_norm(&h, 1e-6)?, &chunk(0)?, &chunk(1)?)?;
            let x = x.transpose(1, 2)?.contiguous()?.reshape((b * n, p, l))?;
            let y = block.spatial.forward(&x, None)?;
            let y = y.reshape((b, n, p, l))?.transpose(1, 2)?;
            h = (h + y)?;
            let mut next = 2;
            if let Some(temporal) = &block.temporal {
                let x = modulate(&layer_norm(&h, 1e-6)?, &chunk(2)?, &chunk(3)?)?;
                let y = temporal.forward(&x.reshape((b * p, n, l))?, None)?;
                h = (h + y.reshape((b, p, n, l))?)?;
                next = 4;
            }
            let x = modulate(&layer_norm(&h, 1e-6)?, &chunk(next)?, &chunk(next + 1)?)?;
            h = (&h + block.ff.forward(&x)?)?;
        }
        let m = self.final_modulation.forward(&c)?;
        let shift = m.narrow(1, 0, l)?.reshape((b, 1, 1, l))?;
        let scale = m.narrow(1, l, l)?.reshape((b, 1, 1, l))?;
        self.head.forward(&modulate(&layer_norm(&h, 1e-6)?, &shift, &scale)?)
    }
}
