use rand::Rng;

use super::model::{impute, AnimatorCondition, AnimatorModel};
use super::target::{anchor_joint_features, decode_residual, AnchorMask};
use crate::body::{KinematicTree, Pose, ShapeParams, POSE_DIM};
use crate::data::{canonical_frame, MotionSequence};
use crate::diffusion::{ddim_sample, DdimConfig};
use crate::error::{Error, Result};
use crate::net::{tensor_values, PERSONS};

/// Samples an `frames`-long motion whose frame `index` is the given pose pair.
///
/// `index = 0` produces only future motion, `index = frames - 1` only past
/// motion. The anchor frame is imputed at every sampling step, so it comes
/// back unchanged up to the rigid round trip through the canonical frame.
#[allow(clippy::too_many_arguments)]
pub fn animate(
    model: &AnimatorModel,
    anchor: &[Pose; 2],
    shapes: &[ShapeParams; 2],
    index: usize,
    frames: usize,
    tree: &KinematicTree,
    ddim: &DdimConfig,
    rng: &mut impl Rng,
) -> Result<MotionSequence> {
    let mask = AnchorMask::new(frames, index)?;
    let frame = canonical_frame(&anchor[0]);
    let local = [frame.apply(&anchor[0])?, frame.apply(&anchor[1])?];
    let params: Vec<f64> = local.iter().flat_map(|p| p.to_params()).collect();
    if params.len() != PERSONS * POSE_DIM {
        return Err(Error::invalid("anchor poses do not match the 22-joint layout"));
    }
    let joints = anchor_joint_features(&local, shapes, tree)?;
    let dtype = model.dtype();
    let cond = AnimatorCondition::new(&[params], &[mask], &[joints], dtype)?;
    let imputer = |z: &candle_core::Tensor| impute(z, &[mask]);
    let z0 = ddim_sample(
        model,
        &cond,
        &[1, PERSONS, frames, POSE_DIM],
        model.schedule(),
        ddim,
        rng,
        Some(&imputer),
        dtype,
    )?;
    let [a, b] = decode_residual(&tensor_values(&z0)?, &local)?;
    let seq = MotionSequence::new(a, b, shapes[0], shapes[1], model.config().fps, None)?;
    frame.invert_sequence(&seq)
}

/// Synthesizes `segments` consecutive windows.
///
/// The first window is anchored at `index`; every later one starts from the
/// previous window's last frame with anchor index 0. Shared boundary frames
/// are kept once, giving `segments·N − (segments − 1)` frames.
#[allow(clippy::too_many_arguments)]
pub fn chain_long_motion(
    model: &AnimatorModel,
    anchor: &[Pose; 2],
    shapes: &[ShapeParams; 2],
    index: usize,
    frames: usize,
    segments: usize,
    tree: &KinematicTree,
    ddim: &DdimConfig,
    rng: &mut impl Rng,
) -> Result<MotionSequence> {
    if segments == 0 {
        return Err(Error::invalid("need at least one segment"));
    }
    let mut out = animate(model, anchor, shapes, index, frames, tree, ddim, rng)?;
    for _ in 1..segments {
        let last = out.len() - 1;
        let next_anchor = [out.poses_a[last].clone(), out.poses_b[last].clone()];
        let next = animate(model, &next_anchor, shapes, 0, frames, tree, ddim, rng)?;
        out.poses_a.extend(next.poses_a.into_iter().skip(1));
        out.poses_b.extend(next.poses_b.into_iter().skip(1));
    }
    Ok(out)
}
