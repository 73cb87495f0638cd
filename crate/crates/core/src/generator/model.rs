use std::path::Path;

use candle_core::{DType, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::GeneratorLossWeights;
use super::text::{HashedBagOfTokens, TextBatch, TextConditioner, TEXT_DIM};
use crate::body::{rest_pose_joints, KinematicTree, Pose, ShapeParams, JOINT_COUNT, POSE_DIM};
use crate::data::{canonical_frame, InteractionClip, Provenance};
use crate::diffusion::{Denoiser, NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::net::{
    host_tensor, read_checkpoint, save_checkpoint, CheckpointMeta, DitNet, NetConfig, ParamStore, PERSONS,
};
use crate::rng::seeded;

pub const GENERATOR_KIND: &str = "generator";
/// Per-person token width: pose parameters followed by rest-pose joints.
pub const GENERATOR_WIDTH: usize = POSE_DIM + 3 * JOINT_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub net: NetConfig,
    pub schedule: ScheduleConfig,
    pub loss: GeneratorLossWeights,
    /// Probability that text conditions a training sample.
    pub p_text: f64,
    /// Probability that person a's pose conditions a training sample.
    pub p_pose: f64,
    pub text_dim: usize,
    pub text_layers: usize,
    pub text_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            net: NetConfig {
                temporal_attention: false,
                feature_dim: GENERATOR_WIDTH,
                extra_input_dim: 1,
                ..NetConfig::default()
            },
            schedule: ScheduleConfig::default(),
            loss: GeneratorLossWeights::default(),
            p_text: 0.8,
            p_pose: 0.2,
            text_dim: TEXT_DIM,
            text_layers: 2,
            text_seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.net.feature_dim != GENERATOR_WIDTH || self.net.extra_input_dim != 1 {
            return Err(Error::Config(format!(
                "generator net needs feature_dim {GENERATOR_WIDTH} and extra_input_dim 1"
            )));
        }
        self.loss.validate()?;
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.p_text) || !unit(self.p_pose) || self.text_dim == 0 {
            return Err(Error::Config(
                "generator needs p_text, p_pose in [0, 1] and text_dim > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn encoder(&self) -> HashedBagOfTokens {
        HashedBagOfTokens {
            dim: self.text_dim,
            seed: self.text_seed,
        }
    }
}

/// Which conditions are present for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConditionMasks {
    pub pose: bool,
    pub text: bool,
}

/// Independent Bernoulli draws for the text and pose gates.
pub fn sample_masks(rng: &mut impl Rng, p_text: f64, p_pose: f64) -> ConditionMasks {
    let text = rng.random_bool(p_text);
    let pose = rng.random_bool(p_pose);
    ConditionMasks { pose, text }
}

/// One interactive pose pair with its shapes and optional caption.
#[derive(Debug, Clone, PartialEq)]
pub struct PosePair {
    pub poses: [Pose; 2],
    pub shapes: [ShapeParams; 2],
    pub text: Option<String>,
}

impl PosePair {
    pub fn from_clip(clip: &InteractionClip) -> Self {
        let (a, b) = clip.anchor_poses();
        Self {
            poses: [a.clone(), b.clone()],
            shapes: [clip.sequence.shape_a, clip.sequence.shape_b],
            text: clip.sequence.text.clone(),
        }
    }
}

/// Token values `(x_I, j_rest)` of one person.
pub fn person_tokens(pose: &Pose, shape: &ShapeParams, tree: &KinematicTree) -> Result<Vec<f64>> {
    let mut out = pose.to_params();
    out.extend(rest_pose_joints(shape, tree)?.flatten());
    if out.len() != GENERATOR_WIDTH {
        return Err(Error::invalid("pose does not match the 22-joint layout"));
    }
    Ok(out)
}

/// Diffusion target of the generator: a `P × 1 × D'` token grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorTarget {
    pub tokens: [Vec<f64>; 2],
    pub text: Option<String>,
}

impl GeneratorTarget {
    /// Canonicalizes the pair on person a and builds both token rows.
    pub fn new(pair: &PosePair, tree: &KinematicTree) -> Result<Self> {
        let frame = canonical_frame(&pair.poses[0]);
        let a = frame.apply(&pair.poses[0])?;
        let b = frame.apply(&pair.poses[1])?;
        Ok(Self {
            tokens: [person_tokens(&a, &pair.shapes[0], tree)?, person_tokens(&b, &pair.shapes[1], tree)?],
            text: pair.text.clone(),
        })
    }
}

/// Per-person gates `[B, P, 1, 1]`: `m_a` for person a, 0 for person b.
pub fn person_gates(pose_given: &[bool], dtype: DType) -> Result<Tensor> {
    let values: Vec<f64> = pose_given
        .iter()
        .flat_map(|g| [if *g { 1.0 } else { 0.0 }, 0.0])
        .collect();
    host_tensor(values, &[pose_given.len(), PERSONS, 1, 1], dtype)
}

/// Replaces person a's tokens by the known clean values where the gate is set.
///
/// `z0` holds the clean tokens for person a; its person-b half is ignored.
pub fn compose_generator_input(z_t: &Tensor, z0: &Tensor, gates: &Tensor) -> Result<Tensor> {
    if z_t.dims() != z0.dims() {
        return Err(Error::ShapeMismatch(format!(
            "clean tokens {:?} do not match iterate {:?}",
            z0.dims(),
            z_t.dims()
        )));
    }
    let keep = (gates.ones_like()? - gates)?;
    Ok((z_t.broadcast_mul(&keep)? + z0.broadcast_mul(gates)?)?)
}

#[derive(Debug, Clone)]
pub struct GeneratorCondition {
    /// Clean tokens `[B, P, 1, D']` (only person a is read).
    pub known: Tensor,
    pub gates: Tensor,
    pub text: TextBatch,
}

#[derive(Debug)]
pub struct GeneratorModel {
    cfg: GeneratorConfig,
    store: ParamStore,
    net: DitNet,
    text: TextConditioner,
    schedule: NoiseSchedule,
}

impl GeneratorModel {
    pub fn new(cfg: &GeneratorConfig, dtype: DType, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new(dtype);
        let net = DitNet::new(&cfg.net, &mut store, &mut rng)?;
        let text = TextConditioner::new(
            &mut store,
            cfg.text_dim,
            cfg.net.latent_dim,
            cfg.net.heads,
            cfg.text_layers,
            &mut rng,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            store,
            net,
            text,
            schedule: cfg.schedule.build()?,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
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
            kind: GENERATOR_KIND.into(),
            config: serde_json::to_string(&self.cfg).expect("config serializes"),
            config_hash: provenance.config_hash.clone(),
            seed: provenance.seed,
            toolkit_version: provenance.toolkit_version.clone(),
        };
        save_checkpoint(path, &self.store, &meta)
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let (meta, tensors) = read_checkpoint(path)?;
        if meta.kind != GENERATOR_KIND {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} model, expected {GENERATOR_KIND}",
                path.display(),
                meta.kind
            )));
        }
        let cfg: GeneratorConfig = serde_json::from_str(&meta.config)
            .map_err(|e| Error::Checkpoint(format!("bad generator config: {e}")))?;
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

impl Denoiser for GeneratorModel {
    type Condition = GeneratorCondition;

    fn predict_x0(&self, z_t: &Tensor, timesteps: &[usize], c: &GeneratorCondition) -> Result<Tensor> {
        let (b, p, n, _) = z_t.dims4()?;
        let x = compose_generator_input(z_t, &c.known, &c.gates)?;
        let tokens = Tensor::cat(&[&x, &c.gates.broadcast_as((b, p, n, 1))?], 3)?;
        let cond = self.text.forward(&c.text)?;
        self.net.forward(&tokens, timesteps, &cond)
    }
}
