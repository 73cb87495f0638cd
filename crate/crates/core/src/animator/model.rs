use std::path::Path;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::loss::AnimatorLossWeights;
use super::target::{AnchorMask, AUGMENTATION_SCALE};
use crate::body::{JOINT_COUNT, POSE_DIM};
use crate::data::Provenance;
use crate::diffusion::{Denoiser, NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::net::{host_tensor, read_checkpoint, save_checkpoint, CheckpointMeta, DitNet, Init, Linear, NetConfig, ParamStore, PERSONS};
use crate::rng::seeded;

pub const ANIMATOR_KIND: &str = "animator";

/// How the anchor frame of each training example is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorSampling {
    /// Any frame of the clip, uniformly, so every anchor index is seen.
    Uniform,
    /// The clip's own interactive frame.
    Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnimatorConfig {
    pub net: NetConfig,
    pub schedule: ScheduleConfig,
    pub loss: AnimatorLossWeights,
    pub augmentation_scale: f64,
    pub anchor_sampling: AnchorSampling,
    /// Clip length N.
    pub frames: usize,
    pub fps: f64,
}

impl Default for AnimatorConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            schedule: ScheduleConfig::default(),
            loss: AnimatorLossWeights::default(),
            augmentation_scale: AUGMENTATION_SCALE,
            anchor_sampling: AnchorSampling::Uniform,
            frames: 30,
            fps: 10.0,
        }
    }
}

impl AnimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.net.feature_dim != POSE_DIM || self.net.extra_input_dim != 1 {
            return Err(Error::Config(format!(
                "animator net needs feature_dim {POSE_DIM} and extra_input_dim 1"
            )));
        }
        self.loss.validate()?;
        if !(self.augmentation_scale >= 0.0) || self.frames == 0 || !(self.fps > 0.0) {
            return Err(Error::Config(
                "animator needs augmentation_scale >= 0, frames >= 1 and fps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the animator network is conditioned on, batched.
#[derive(Debug, Clone)]
pub struct AnimatorCondition {
    /// Anchor parameters `[B, P, 1, D]` added to the imputed iterate.
    pub anchor: Tensor,
    /// One-hot anchor masks `[B, 1, N, 1]`.
    pub masks: Tensor,
    /// Flattened FK joints of both anchor poses, `[B, 2·J·3]`.
    pub joints: Tensor,
}

impl AnimatorCondition {
    pub fn new(anchors: &[Vec<f64>], masks: &[AnchorMask], joints: &[Vec<f64>], dtype: DType) -> Result<Self> {
        let b = masks.len();
        if anchors.len() != b || joints.len() != b || b == 0 {
            return Err(Error::ShapeMismatch("condition batch sizes differ".into()));
        }
        let n = masks[0].frames();
        if masks.iter().any(|m| m.frames() != n) {
            return Err(Error::ShapeMismatch("anchor masks have different lengths".into()));
        }
        Ok(Self {
            anchor: host_tensor(anchors.concat(), &[b, PERSONS, 1, POSE_DIM], dtype)?,
            masks: mask_tensor(masks, dtype)?,
            joints: host_tensor(joints.concat(), &[b, PERSONS * JOINT_COUNT * 3], dtype)?,
        })
    }
}

fn mask_tensor(masks: &[AnchorMask], dtype: DType) -> Result<Tensor> {
    let n = masks[0].frames();
    let values: Vec<f64> = masks.iter().flat_map(|m| m.values()).collect();
    host_tensor(values, &[masks.len(), 1, n, 1], dtype)
}

/// Zeroes the anchor frame of a `[B, P, N, D]` iterate.
pub fn impute(z_t: &Tensor, masks: &[AnchorMask]) -> Result<Tensor> {
    let (b, _, n, _) = z_t.dims4()?;
    if masks.len() != b || masks.iter().any(|m| m.frames() != n) {
        return Err(Error::ShapeMismatch(format!(
            "{} masks for iterate {:?}",
            masks.len(),
            z_t.dims()
        )));
    }
    impute_with(z_t, &mask_tensor(masks, z_t.dtype())?)
}

fn impute_with(z_t: &Tensor, masks: &Tensor) -> Result<Tensor> {
    Ok(z_t.broadcast_mul(&(masks.ones_like()? - masks)?)?)
}

/// Residual denoiser with its condition encoder.
#[derive(Debug)]
pub struct AnimatorModel {
    cfg: AnimatorConfig,
    store: ParamStore,
    net: DitNet,
    cond: Linear,
    schedule: NoiseSchedule,
}

impl AnimatorModel {
    pub fn new(cfg: &AnimatorConfig, dtype: DType, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new(dtype);
        let net = DitNet::new(&cfg.net, &mut store, &mut rng)?;
        let cond = Linear::new(
            &mut store,
            "condition",
            PERSONS * JOINT_COUNT * 3,
            cfg.net.latent_dim,
            Init::FanIn(1.0),
            &mut rng,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            store,
            net,
            cond,
            schedule: cfg.schedule.build()?,
        })
    }

    pub fn config(&self) -> &AnimatorConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn save(&self, path: &Path, provenance: &Provenance) -> Result<()> {
        let meta = CheckpointMeta {
            kind: ANIMATOR_KIND.into(),
            config: serde_json::to_string(&self.cfg).expect("config serializes"),
            config_hash: provenance.config_hash.clone(),
            seed: provenance.seed,
            toolkit_version: provenance.toolkit_version.clone(),
        };
        save_checkpoint(path, &self.store, &meta)
    }

    /// Rebuilds a model from a checkpoint written by [`AnimatorModel::save`].
    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let (meta, tensors) = read_checkpoint(path)?;
        if meta.kind != ANIMATOR_KIND {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} model, expected {ANIMATOR_KIND}",
                path.display(),
                meta.kind
            )));
        }
        let cfg: AnimatorConfig = serde_json::from_str(&meta.config)
            .map_err(|e| Error::Checkpoint(format!("bad animator config: {e}")))?;
        let dtype = tensors
            .values()
            .next()
            .map(|t| t.dtype())
            .ok_or_else(|| Error::Checkpoint("checkpoint has no tensors".into()))?;
        let model = Self::new(&cfg, dtype, 0)?;
        model.store.load(&tensors)?;
        Ok((model, meta))
    }
}

impl Denoiser for AnimatorModel {
    type Condition = AnimatorCondition;

    /// Imputes the anchor frame, adds the anchor, appends the mask channel and
    /// predicts clean residuals.
    fn predict_x0(&self, z_t: &Tensor, timesteps: &[usize], c: &AnimatorCondition) -> Result<Tensor> {
        let (b, p, n, _) = z_t.dims4()?;
        let x = impute_with(z_t, &c.masks)?.broadcast_add(&c.anchor)?;
        let m = c.masks.broadcast_as((b, p, n, 1))?;
        let tokens = Tensor::cat(&[&x, &m], 3)?;
        let cond = self.cond.forward(&c.joints)?;
        self.net.forward(&tokens, timesteps, &cond)
    }
}
