use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::animator::EpochSampler;
use crate::body::{forward_kinematics, KinematicTree};
use crate::data::{canonical_frame, MotionSequence, Provenance};
use crate::error::{Error, Result};
use crate::net::{
    host_tensor, read_checkpoint, save_checkpoint, silu, tensor_values, train_loop, CheckpointMeta, Init, Linear,
    OptimizerConfig, ParamStore, TrainLog,
};
use crate::rng::{derive_seed, seeded};

pub const AUTOENCODER_KIND: &str = "autoencoder";

const NORM_PREFIX: &str = "norm.";
const STD_FLOOR: f64 = 1e-3;

/// Shape of the feature autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    /// Clip length the encoder accepts.
    pub frames: usize,
    pub hidden: usize,
    pub feature_dim: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            frames: 30,
            hidden: 256,
            feature_dim: 64,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.hidden == 0 || self.feature_dim == 0 {
            return Err(Error::Config("autoencoder sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Joint positions of both persons over the clip, expressed in the frame of
/// person a at the first frame, flattened frame-major.
pub fn motion_descriptor(seq: &MotionSequence, tree: &KinematicTree) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::invalid("cannot describe an empty motion"));
    }
    let canon = canonical_frame(&seq.poses_a[0]).apply_sequence(seq)?;
    let mut out = Vec::with_capacity(seq.len() * tree.joint_count() * 6);
    for (a, b) in canon.poses_a.iter().zip(&canon.poses_b) {
        for (pose, shape) in [(a, &canon.shape_a), (b, &canon.shape_b)] {
            for j in forward_kinematics(pose, shape, tree)?.0 {
                out.extend_from_slice(&[j.x, j.y, j.z]);
            }
        }
    }
    Ok(out)
}

/// Encoder half of a reconstruction-trained motion autoencoder.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: AutoencoderConfig,
    input_dim: usize,
    store: ParamStore,
    mean: Tensor,
    std: Tensor,
    enc: [Linear; 2],
    dec: [Linear; 2],
}

impl FeatureExtractor {
    fn new(cfg: &AutoencoderConfig, tree: &KinematicTree, dtype: DType, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let input_dim = cfg.frames * tree.joint_count() * 6;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new(dtype);
        let enc = [
            Linear::new(&mut store, "enc.0", input_dim, cfg.hidden, Init::FanIn(1.0), &mut rng)?,
            Linear::new(&mut store, "enc.1", cfg.hidden, cfg.feature_dim, Init::FanIn(1.0), &mut rng)?,
        ];
        let dec = [
            Linear::new(&mut store, "dec.0", cfg.feature_dim, cfg.hidden, Init::FanIn(1.0), &mut rng)?,
            Linear::new(&mut store, "dec.1", cfg.hidden, input_dim, Init::FanIn(1.0), &mut rng)?,
        ];
        let mean = store.create(&format!("{NORM_PREFIX}mean"), &[input_dim], Init::Zeros, &mut rng)?;
        let std = store.create(&format!("{NORM_PREFIX}std"), &[input_dim], Init::Ones, &mut rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            input_dim,
            store,
            mean,
            std,
            enc,
            dec,
        })
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.cfg
    }

    pub fn feature_dim(&self) -> usize {
        self.cfg.feature_dim
    }

    fn trainable(&self) -> Vec<candle_core::Var> {
        self.store
            .named()
            .iter()
            .filter(|(n, _)| !n.starts_with(NORM_PREFIX))
            .map(|(_, v)| v.clone())
            .collect()
    }

    fn normalized(&self, descriptors: &[Vec<f64>]) -> Result<Tensor> {
        for d in descriptors {
            if d.len() != self.input_dim {
                return Err(Error::invalid(format!(
                    "autoencoder expects {}-frame clips ({} values), got {} values",
                    self.cfg.frames,
                    self.input_dim,
                    d.len()
                )));
            }
        }
        let flat = descriptors.concat();
        let x = host_tensor(flat, &[descriptors.len(), self.input_dim], self.store.dtype())?;
        Ok(x.broadcast_sub(&self.mean)?.broadcast_div(&self.std)?)
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.enc[1].forward(&silu(&self.enc[0].forward(x)?)?)
    }

    fn reconstruction_loss(&self, x: &Tensor) -> Result<Tensor> {
        let z = self.encode(x)?;
        let y = self.dec[1].forward(&silu(&self.dec[0].forward(&z)?)?)?;
        Ok((y - x)?.sqr()?.mean_all()?)
    }

    /// Fixed-width feature vector of one clip.
    pub fn features(&self, seq: &MotionSequence, tree: &KinematicTree) -> Result<Vec<f64>> {
        Ok(self.features_batch(std::slice::from_ref(seq), tree)?.remove(0))
    }

    pub fn features_batch(&self, seqs: &[MotionSequence], tree: &KinematicTree) -> Result<Vec<Vec<f64>>> {
        let descriptors = seqs
            .iter()
            .map(|s| motion_descriptor(s, tree))
            .collect::<Result<Vec<_>>>()?;
        let z = self.encode(&self.normalized(&descriptors)?)?;
        let values = tensor_values(&z)?;
        Ok(values.chunks(self.cfg.feature_dim).map(<[f64]>::to_vec).collect())
    }

    /// Mean squared reconstruction error in normalized units.
    pub fn reconstruction_error(&self, seqs: &[MotionSequence], tree: &KinematicTree) -> Result<f64> {
        let descriptors = seqs
            .iter()
            .map(|s| motion_descriptor(s, tree))
            .collect::<Result<Vec<_>>>()?;
        crate::diffusion::scalar(&self.reconstruction_loss(&self.normalized(&descriptors)?)?)
    }

    pub fn save(&self, path: &Path, provenance: &Provenance) -> Result<()> {
        let meta = CheckpointMeta {
            kind: AUTOENCODER_KIND.into(),
            config: serde_json::to_string(&self.cfg).expect("config serializes"),
            config_hash: provenance.config_hash.clone(),
            seed: provenance.seed,
            toolkit_version: provenance.toolkit_version.clone(),
        };
        save_checkpoint(path, &self.store, &meta)
    }

    pub fn load(path: &Path, tree: &KinematicTree) -> Result<(Self, CheckpointMeta)> {
        let (meta, tensors) = read_checkpoint(path)?;
        if meta.kind != AUTOENCODER_KIND {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} model, expected {AUTOENCODER_KIND}",
                path.display(),
                meta.kind
            )));
        }
        let cfg: AutoencoderConfig = serde_json::from_str(&meta.config)
            .map_err(|e| Error::Checkpoint(format!("bad autoencoder config: {e}")))?;
        let dtype = tensors
            .values()
            .next()
            .map(|t| t.dtype())
            .ok_or_else(|| Error::Checkpoint("checkpoint has no tensors".into()))?;
        let model = Self::new(&cfg, tree, dtype, 0)?;
        model.store.load(&tensors)?;
        Ok((model, meta))
    }
}

/// Trains the feature autoencoder by reconstruction of normalized clip descriptors.
pub fn train_autoencoder(
    motions: &[MotionSequence],
    cfg: &AutoencoderConfig,
    opt: &OptimizerConfig,
    tree: &KinematicTree,
    dtype: DType,
    seed: u64,
) -> Result<(FeatureExtractor, TrainLog)> {
    if motions.len() < 2 {
        return Err(Error::invalid(format!(
            "autoencoder training needs at least 2 clips, got {}",
            motions.len()
        )));
    }
    let model = FeatureExtractor::new(cfg, tree, dtype, derive_seed(seed, 0))?;
    let descriptors = motions
        .iter()
        .map(|s| motion_descriptor(s, tree))
        .collect::<Result<Vec<_>>>()?;
    let d = model.input_dim;
    let n = descriptors.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| descriptors.iter().map(|v| v[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let var = descriptors.iter().map(|v| (v[j] - mean[j]).powi(2)).sum::<f64>() / n;
            var.sqrt().max(STD_FLOOR)
        })
        .collect();
    let by_name = |name: &str| model.store.get(&format!("{NORM_PREFIX}{name}")).expect("normalizer exists").clone();
    by_name("mean").set(&host_tensor(mean, &[d], dtype)?)?;
    by_name("std").set(&host_tensor(std, &[d], dtype)?)?;
    let inputs = model.normalized(&descriptors)?;

    let mut rng = seeded(derive_seed(seed, 1));
    let mut sampler = EpochSampler::new(descriptors.len());
    let batch = opt.batch_size.min(descriptors.len());
    let log = train_loop(model.trainable(), opt, |_| {
        let picks: Vec<u32> = sampler.draw(batch, &mut rng).into_iter().map(|i| i as u32).collect();
        let idx = Tensor::new(picks.as_slice(), inputs.device())?;
        let loss = model.reconstruction_loss(&inputs.index_select(&idx, 0)?)?;
        let value = crate::diffusion::scalar(&loss)?;
        Ok((loss, BTreeMap::from([("reconstruction".to_string(), value)])))
    })?;
    Ok((model, log))
}
