use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{person_gates, sample_masks, ConditionMasks, GeneratorCondition, GeneratorTarget, GENERATOR_WIDTH};
use super::text::{TextBatch, TextEncoder};
use crate::animator::LossOutput;
use crate::body::{KinematicTree, JOINT_COUNT, POSE_DIM};
use crate::diffusion::{ensure_finite, forward_noise, mse, sample_timesteps, scalar, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::net::{axis_angle_to_matrix, bone_lengths_tensor, host_tensor, PERSONS};
use crate::rng::gaussian_tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorLossWeights {
    pub diffusion: f64,
    pub smpl: f64,
    pub bone: f64,
}

impl Default for GeneratorLossWeights {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            smpl: 1.0,
            bone: 1.0,
        }
    }
}

impl GeneratorLossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.diffusion, self.smpl, self.bone].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("generator loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorBatch {
    /// Clean tokens `[B, P, 1, D']`.
    pub z0: Tensor,
    pub condition: GeneratorCondition,
    pub masks: Vec<ConditionMasks>,
    pub timesteps: Vec<usize>,
    pub eps: Tensor,
}

impl GeneratorBatch {
    /// Draws condition masks, timesteps and noise from `rng`.
    pub fn sample(
        targets: &[&GeneratorTarget],
        p_text: f64,
        p_pose: f64,
        encoder: &dyn TextEncoder,
        schedule: &NoiseSchedule,
        dtype: DType,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let masks: Vec<ConditionMasks> = targets.iter().map(|_| sample_masks(rng, p_text, p_pose)).collect();
        let timesteps = sample_timesteps(rng, targets.len(), schedule);
        let eps = gaussian_tensor(rng, &[targets.len(), PERSONS, 1, GENERATOR_WIDTH], dtype, &Device::Cpu)?;
        Self::from_parts(targets, masks, timesteps, eps, encoder, dtype)
    }

    pub fn from_parts(
        targets: &[&GeneratorTarget],
        masks: Vec<ConditionMasks>,
        timesteps: Vec<usize>,
        eps: Tensor,
        encoder: &dyn TextEncoder,
        dtype: DType,
    ) -> Result<Self> {
        let b = targets.len();
        if b == 0 || masks.len() != b || timesteps.len() != b {
            return Err(Error::ShapeMismatch("batch parts disagree in size".into()));
        }
        let values: Vec<f64> = targets.iter().flat_map(|t| t.tokens.concat()).collect();
        let z0 = host_tensor(values, &[b, PERSONS, 1, GENERATOR_WIDTH], dtype)?;
        let sequences: Vec<Vec<Vec<f64>>> = targets
            .iter()
            .map(|t| t.text.as_deref().map(|s| encoder.encode_tokens(s)).unwrap_or_default())
            .collect();
        let text_gates: Vec<bool> = masks.iter().map(|m| m.text).collect();
        let pose_gates: Vec<bool> = masks.iter().map(|m| m.pose).collect();
        let condition = GeneratorCondition {
            known: z0.clone(),
            gates: person_gates(&pose_gates, dtype)?,
            text: TextBatch::new(&sequences, &text_gates, encoder.dim(), dtype)?,
        };
        Ok(Self {
            z0,
            condition,
            masks,
            timesteps,
            eps,
        })
    }
}

/// Weighted generator objective on one batch.
///
/// * diffusion: MSE of predicted vs. clean tokens, person a composed with its
///   clean value where the pose gate is set.
/// * smpl: MSE of joint rotation matrices plus MSE of root translations.
/// * bone: MSE of bone lengths measured on predicted vs. clean rest joints.
pub fn generator_loss<M: Denoiser<Condition = GeneratorCondition>>(
    batch: &GeneratorBatch,
    denoiser: &M,
    schedule: &NoiseSchedule,
    weights: &GeneratorLossWeights,
    tree: &KinematicTree,
) -> Result<LossOutput> {
    if tree.joint_count() != JOINT_COUNT {
        return Err(Error::invalid("generator losses need the 22-joint tree"));
    }
    let noisy = forward_noise(&batch.z0, &batch.timesteps, &batch.eps, schedule)?;
    let prediction = denoiser.predict_x0(&noisy, &batch.timesteps, &batch.condition)?;
    let diffusion = mse(&prediction, &batch.z0)?;

    let b = batch.z0.dims()[0];
    let m = b * PERSONS;
    let flat = |t: &Tensor| t.reshape((m, GENERATOR_WIDTH));
    let (pred, gt) = (flat(&prediction)?, flat(&batch.z0)?);
    let rot = |t: &Tensor| -> Result<Tensor> {
        axis_angle_to_matrix(&t.narrow(1, 0, 3 * JOINT_COUNT)?.reshape((m, JOINT_COUNT, 3))?)
    };
    let trans = |t: &Tensor| t.narrow(1, 3 * JOINT_COUNT, 3);
    let smpl = (mse(&rot(&pred)?, &rot(&gt)?)? + mse(&trans(&pred)?, &trans(&gt)?)?)?;

    let rest = |t: &Tensor| -> Result<Tensor> {
        bone_lengths_tensor(&t.narrow(1, POSE_DIM, 3 * JOINT_COUNT)?.reshape((m, JOINT_COUNT, 3))?, tree)
    };
    let bone = mse(&rest(&pred)?, &rest(&gt)?)?;

    let total = (((&diffusion * weights.diffusion)? + (&smpl * weights.smpl)?)? + (&bone * weights.bone)?)?;
    ensure_finite(&total, "generator loss")?;
    let mut components = BTreeMap::new();
    for (name, t) in [("diffusion", &diffusion), ("smpl", &smpl), ("bone", &bone), ("total", &total)] {
        components.insert(name.to_string(), scalar(t)?);
    }
    Ok(LossOutput { total, components })
}
