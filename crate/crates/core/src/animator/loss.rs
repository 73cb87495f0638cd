use std::collections::BTreeMap;

use candle_core::{DType, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::AnimatorCondition;
use super::target::{anchor_joint_features, augment_anchor, AnchorMask, AnimatorTarget};
use crate::body::{KinematicTree, Pose, JOINT_COUNT, POSE_DIM};
use crate::diffusion::{ensure_finite, forward_noise, mse, sample_timesteps, scalar, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::net::{axis_angle_to_matrix, host_tensor, kinematics_from_matrices, norm_last, offsets_tensor, PERSONS};
use crate::rng::gaussian_tensor;

/// Weights of the four animator loss terms plus the contact activation distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnimatorLossWeights {
    pub diffusion: f64,
    pub smpl: f64,
    pub inter: f64,
    pub vel: f64,
    /// Ground-truth joint pairs closer than this (meters) enter the contact term.
    pub contact_distance: f64,
}

impl Default for AnimatorLossWeights {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            smpl: 1.0,
            inter: 0.5,
            vel: 1.0,
            contact_distance: 0.10,
        }
    }
}

impl AnimatorLossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.diffusion, self.smpl, self.inter, self.vel];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(self.contact_distance > 0.0) {
            return Err(Error::Config(
                "animator loss weights must be >= 0 and contact_distance > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Pose-derived quantities compared by the auxiliary losses.
struct Geometry {
    /// Local rotation matrices `[B, P, N, J, 3, 3]`.
    rotations: Tensor,
    translation: Tensor,
    /// World joints `[B, P, N, J, 3]`.
    joints: Tensor,
    /// `R_a^T R_b` of the roots, `[B, N, 3, 3]`.
    relative: Tensor,
    /// Joint distances between the persons, `[B, N, J, J]`.
    pair_distance: Tensor,
}

fn geometry(params: &Tensor, offsets: &Tensor, tree: &KinematicTree) -> Result<Geometry> {
    let (b, p, n, d) = params.dims4()?;
    let j = tree.joint_count();
    let m = b * p * n;
    let flat = params.reshape((m, d))?;
    let rotations = axis_angle_to_matrix(&flat.narrow(1, 0, 3 * j)?.reshape((m, j, 3))?)?;
    let translation = flat.narrow(1, 3 * j, 3)?;
    let (joints, root) = kinematics_from_matrices(&rotations, &translation, offsets, tree)?;
    let joints = joints.reshape((b, p, n, j, 3))?;
    let root = root.reshape((b, p, n, 3, 3))?;
    let person = |t: &Tensor, i: usize| -> Result<Tensor> { Ok(t.narrow(1, i, 1)?.squeeze(1)?) };
    let relative = person(&root, 0)?.t()?.contiguous()?.matmul(&person(&root, 1)?.contiguous()?)?;
    let ja = person(&joints, 0)?.unsqueeze(3)?;
    let jb = person(&joints, 1)?.unsqueeze(2)?;
    let pair_distance = norm_last(&ja.broadcast_sub(&jb)?)?;
    Ok(Geometry {
        rotations: rotations.reshape((b, p, n, j, 3, 3))?,
        translation: translation.reshape((b, p, n, 3))?,
        joints,
        relative,
        pair_distance,
    })
}

/// A fully drawn training batch: targets, conditioning and diffusion noise.
#[derive(Debug, Clone)]
pub struct AnimatorBatch {
    /// Clean residuals `[B, P, N, D]`.
    pub z0: Tensor,
    pub condition: AnimatorCondition,
    /// Clean anchors `[B, P, 1, D]` used to decode predictions.
    pub clean_anchor: Tensor,
    pub timesteps: Vec<usize>,
    pub eps: Tensor,
    /// Bone offsets per body and frame, `[B·P·N, J, 3]`.
    offsets: Tensor,
}

impl AnimatorBatch {
    /// Draws anchor augmentation, timesteps and noise from `rng`.
    pub fn sample(
        targets: &[&AnimatorTarget],
        augmentation_scale: f64,
        schedule: &NoiseSchedule,
        tree: &KinematicTree,
        dtype: DType,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let conditioning = targets
            .iter()
            .map(|t| augment_anchor(&t.anchor, rng, augmentation_scale))
            .collect::<Result<Vec<_>>>()?;
        let timesteps = sample_timesteps(rng, targets.len(), schedule);
        let n = targets.first().map(|t| t.frames()).unwrap_or(0);
        let eps = gaussian_tensor(rng, &[targets.len(), PERSONS, n, POSE_DIM], dtype, &candle_core::Device::Cpu)?;
        Self::from_parts(targets, &conditioning, timesteps, eps, tree, dtype)
    }

    /// Assembles a batch from explicitly chosen random parts.
    pub fn from_parts(
        targets: &[&AnimatorTarget],
        conditioning: &[[Pose; 2]],
        timesteps: Vec<usize>,
        eps: Tensor,
        tree: &KinematicTree,
        dtype: DType,
    ) -> Result<Self> {
        if targets.is_empty() || conditioning.len() != targets.len() || timesteps.len() != targets.len() {
            return Err(Error::ShapeMismatch("batch parts disagree in size".into()));
        }
        let b = targets.len();
        let n = targets[0].frames();
        if targets.iter().any(|t| t.frames() != n || t.width != POSE_DIM) {
            return Err(Error::ShapeMismatch("targets differ in length or width".into()));
        }
        let residuals: Vec<f64> = targets.iter().flat_map(|t| t.residuals.iter().copied()).collect();
        let clean: Vec<f64> = targets
            .iter()
            .flat_map(|t| t.anchor.iter().flat_map(|p| p.to_params()))
            .collect();
        let anchors: Vec<Vec<f64>> = conditioning
            .iter()
            .map(|a| a.iter().flat_map(|p| p.to_params()).collect())
            .collect();
        let joints = conditioning
            .iter()
            .zip(targets)
            .map(|(a, t)| anchor_joint_features(a, &t.shapes, tree))
            .collect::<Result<Vec<_>>>()?;
        let masks: Vec<AnchorMask> = targets.iter().map(|t| t.mask).collect();
        let mut offsets = Vec::with_capacity(b * PERSONS * n);
        for t in targets {
            for shape in &t.shapes {
                let o = offsets_tensor(tree, shape, dtype)?;
                for _ in 0..n {
                    offsets.push(o.clone());
                }
            }
        }
        Ok(Self {
            z0: host_tensor(residuals, &[b, PERSONS, n, POSE_DIM], dtype)?,
            condition: AnimatorCondition::new(&anchors, &masks, &joints, dtype)?,
            clean_anchor: host_tensor(clean, &[b, PERSONS, 1, POSE_DIM], dtype)?,
            timesteps,
            eps,
            offsets: Tensor::stack(&offsets, 0)?,
        })
    }
}

/// Scalar loss plus its named, unweighted components.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: Tensor,
    pub components: BTreeMap<String, f64>,
}

/// First differences along the frame axis (dimension 2).
fn frame_velocity(x: &Tensor) -> Result<Option<Tensor>> {
    let n = x.dims()[2];
    if n < 2 {
        return Ok(None);
    }
    Ok(Some((x.narrow(2, 1, n - 1)? - x.narrow(2, 0, n - 1)?)?))
}

/// Weighted animator objective on one batch.
///
/// * diffusion: MSE of predicted vs. clean residuals, with the anchor frame
///   imputed in the noisy input.
/// * smpl: MSE of local rotation matrices plus MSE of root translations of
///   the decoded poses.
/// * inter: contact term over ground-truth joint pairs closer than
///   `contact_distance`, penalizing predicted distances that exceed the
///   ground truth, plus MSE of the relative root rotation `R_a^T R_b`.
/// * vel: MSE of first differences of world joints.
pub fn animator_loss<M: Denoiser<Condition = AnimatorCondition>>(
    batch: &AnimatorBatch,
    denoiser: &M,
    schedule: &NoiseSchedule,
    weights: &AnimatorLossWeights,
    tree: &KinematicTree,
) -> Result<LossOutput> {
    if tree.joint_count() != JOINT_COUNT {
        return Err(Error::invalid("animator losses need the 22-joint tree"));
    }
    let noisy = forward_noise(&batch.z0, &batch.timesteps, &batch.eps, schedule)?;
    let prediction = denoiser.predict_x0(&noisy, &batch.timesteps, &batch.condition)?;
    let diffusion = mse(&prediction, &batch.z0)?;

    let pred = geometry(&prediction.broadcast_add(&batch.clean_anchor)?, &batch.offsets, tree)?;
    let gt = geometry(&batch.z0.broadcast_add(&batch.clean_anchor)?, &batch.offsets, tree)?;
    let smpl = (mse(&pred.rotations, &gt.rotations)? + mse(&pred.translation, &gt.translation)?)?;

    let active = gt.pair_distance.lt(weights.contact_distance)?.to_dtype(prediction.dtype())?;
    let count = scalar(&active.sum_all()?)?;
    let excess = (&pred.pair_distance - &gt.pair_distance)?.relu()?;
    let contact = ((excess.sqr()? * &active)?.sum_all()? / count.max(1.0))?;
    let orientation = mse(&pred.relative, &gt.relative)?;
    let inter = (contact + orientation)?;

    let vel = match (frame_velocity(&pred.joints)?, frame_velocity(&gt.joints)?) {
        (Some(p), Some(g)) => mse(&p, &g)?,
        _ => diffusion.zeros_like()?,
    };

    let total = ((((&diffusion * weights.diffusion)? + (&smpl * weights.smpl)?)? + (&inter * weights.inter)?)?
        + (&vel * weights.vel)?)?;
    ensure_finite(&total, "animator loss")?;
    let mut components = BTreeMap::new();
    for (name, t) in [("diffusion", &diffusion), ("smpl", &smpl), ("inter", &inter), ("vel", &vel), ("total", &total)] {
        components.insert(name.to_string(), scalar(t)?);
    }
    Ok(LossOutput { total, components })
}
