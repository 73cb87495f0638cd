use rand::Rng;
use rand_distr::StandardNormal;

use crate::body::{forward_kinematics, KinematicTree, Pose, ShapeParams};
use crate::data::{canonical_frame, InteractionClip, MotionSequence};
use crate::error::{Error, Result};

/// Anchor noise used during training.
pub const AUGMENTATION_SCALE: f64 = 0.02;

/// One-hot frame mask marking the anchor frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorMask {
    frames: usize,
    index: usize,
}

impl AnchorMask {
    pub fn new(frames: usize, index: usize) -> Result<Self> {
        if index >= frames {
            return Err(Error::invalid(format!(
                "anchor index {index} outside {frames} frames"
            )));
        }
        Ok(Self { frames, index })
    }

    /// Parses explicit mask values; exactly one entry must be 1, the rest 0.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let ones: Vec<usize> = (0..values.len()).filter(|i| values[*i] == 1.0).collect();
        let zeros = values.iter().filter(|v| **v == 0.0).count();
        if ones.len() != 1 || zeros + 1 != values.len() {
            return Err(Error::invalid("anchor mask must be one-hot"));
        }
        Self::new(values.len(), ones[0])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.frames)
            .map(|i| if i == self.index { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Diffusion target of the animator: both tracks as residuals from the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnimatorTarget {
    /// `[P, N, D]` row-major residuals.
    pub residuals: Vec<f64>,
    pub anchor: [Pose; 2],
    pub shapes: [ShapeParams; 2],
    pub mask: AnchorMask,
    pub width: usize,
}

impl AnimatorTarget {
    pub fn frames(&self) -> usize {
        self.mask.frames()
    }

    pub fn anchor_index(&self) -> usize {
        self.mask.index()
    }

    /// Residual vector of `person` at `frame`.
    pub fn residual(&self, person: usize, frame: usize) -> &[f64] {
        let start = (person * self.frames() + frame) * self.width;
        &self.residuals[start..start + self.width]
    }
}

/// Subtracts the anchor pose parameters from every frame of both tracks.
///
/// The clip is expected to be canonicalized already; the anchor frame's
/// residual is exactly zero.
pub fn encode_residual(clip: &InteractionClip) -> Result<AnimatorTarget> {
    encode_sequence(&clip.sequence, clip.anchor)
}

pub(crate) fn encode_sequence(seq: &MotionSequence, anchor: usize) -> Result<AnimatorTarget> {
    let mask = AnchorMask::new(seq.len(), anchor)?;
    let anchor_poses = [seq.poses_a[anchor].clone(), seq.poses_b[anchor].clone()];
    let width = anchor_poses[0].param_len();
    let mut residuals = Vec::with_capacity(2 * seq.len() * width);
    for (track, x_i) in [&seq.poses_a, &seq.poses_b].into_iter().zip(&anchor_poses) {
        let base = x_i.to_params();
        for pose in track {
            residuals.extend(pose.to_params().iter().zip(&base).map(|(x, a)| x - a));
        }
    }
    Ok(AnimatorTarget {
        residuals,
        anchor: anchor_poses,
        shapes: [seq.shape_a, seq.shape_b],
        mask,
        width,
    })
}

/// Adds the anchor back to `[P, N, D]` residuals; rotations are re-wrapped.
pub fn decode_residual(residuals: &[f64], anchor: &[Pose; 2]) -> Result<[Vec<Pose>; 2]> {
    let width = anchor[0].param_len();
    if residuals.len() % (2 * width) != 0 || residuals.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} residual values do not form two tracks of width {width}",
            residuals.len()
        )));
    }
    let frames = residuals.len() / (2 * width);
    let mut out: [Vec<Pose>; 2] = [Vec::with_capacity(frames), Vec::with_capacity(frames)];
    for (p, x_i) in anchor.iter().enumerate() {
        let base = x_i.to_params();
        for n in 0..frames {
            let start = (p * frames + n) * width;
            let row: Vec<f64> = residuals[start..start + width]
                .iter()
                .zip(&base)
                .map(|(r, a)| r + a)
                .collect();
            out[p].push(Pose::from_params(&row)?);
        }
    }
    Ok(out)
}

/// Re-expresses a sequence in the frame of person a at `anchor` and encodes it.
pub(crate) fn canonical_target(seq: &MotionSequence, anchor: usize) -> Result<AnimatorTarget> {
    let frame = canonical_frame(&seq.poses_a[anchor]);
    encode_sequence(&frame.apply_sequence(seq)?, anchor)
}

/// Gaussian perturbation of every anchor pose parameter.
///
/// Used only for what the network sees; supervision keeps the clean anchor.
pub fn augment_anchor(anchor: &[Pose; 2], rng: &mut impl Rng, scale: f64) -> Result<[Pose; 2]> {
    let mut jitter = |p: &Pose| -> Result<Pose> {
        let params: Vec<f64> = p
            .to_params()
            .into_iter()
            .map(|x| x + scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Pose::from_params(&params)
    };
    Ok([jitter(&anchor[0])?, jitter(&anchor[1])?])
}

/// FK joints of both anchor poses, person a first, flattened.
pub fn anchor_joint_features(
    anchor: &[Pose; 2],
    shapes: &[ShapeParams; 2],
    tree: &KinematicTree,
) -> Result<Vec<f64>> {
    let mut out = forward_kinematics(&anchor[0], &shapes[0], tree)?.flatten();
    out.extend(forward_kinematics(&anchor[1], &shapes[1], tree)?.flatten());
    Ok(out)
}
