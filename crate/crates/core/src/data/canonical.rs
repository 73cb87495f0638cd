use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::motion::{InteractionClip, MotionSequence};
use crate::body::{rotation_matrix, Pose};
use crate::error::Result;

/// Horizontal facing norms below this are treated as undefined.
const DEGENERATE_FACING: f64 = 1e-9;

/// Axis-angle vector of a unit quaternion.
///
/// Uses `atan2` for the angle so that rotations close to identity keep full
/// precision.
pub(crate) fn quaternion_to_axis_angle(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q: &Quaternion<f64> = q.as_ref();
    let (w, v) = if q.w < 0.0 { (-q.w, -q.imag()) } else { (q.w, q.imag()) };
    let s = v.norm();
    if s < 1e-300 {
        return Vector3::zeros();
    }
    let angle = 2.0 * s.atan2(w);
    v * (angle / s)
}

pub(crate) fn axis_angle_to_quaternion(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*v)
}

/// Direction the body faces: its local +Z axis in world coordinates.
pub fn facing_direction(pose: &Pose) -> Vector3<f64> {
    rotation_matrix(pose.global_orient()) * Vector3::z()
}

/// Rigid transform `x ↦ R_y(yaw) · (x − offset)` with a vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalFrame {
    pub yaw: f64,
    /// Horizontal root position removed by the transform.
    pub offset: Vector3<f64>,
    /// Set when the facing direction had no horizontal component.
    pub degenerate: bool,
}

impl CanonicalFrame {
    pub fn identity() -> Self {
        Self {
            yaw: 0.0,
            offset: Vector3::zeros(),
            degenerate: false,
        }
    }

    fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), self.yaw)
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Rotation3::from_axis_angle(&Vector3::y_axis(), self.yaw) * (p - self.offset)
    }

    pub fn apply(&self, pose: &Pose) -> Result<Pose> {
        let q = self.rotation() * axis_angle_to_quaternion(pose.global_orient());
        pose.with_root(quaternion_to_axis_angle(&q), self.apply_point(pose.translation()))
    }

    /// Maps a canonical-frame pose back into the original world frame.
    pub fn invert(&self, pose: &Pose) -> Result<Pose> {
        let inv = self.rotation().inverse();
        let q = inv * axis_angle_to_quaternion(pose.global_orient());
        pose.with_root(quaternion_to_axis_angle(&q), inv * pose.translation() + self.offset)
    }

    pub fn apply_sequence(&self, seq: &MotionSequence) -> Result<MotionSequence> {
        let map = |poses: &[Pose]| poses.iter().map(|p| self.apply(p)).collect::<Result<Vec<_>>>();
        MotionSequence::new(
            map(&seq.poses_a)?,
            map(&seq.poses_b)?,
            seq.shape_a,
            seq.shape_b,
            seq.fps,
            seq.text.clone(),
        )
    }

    pub fn invert_sequence(&self, seq: &MotionSequence) -> Result<MotionSequence> {
        let map = |poses: &[Pose]| poses.iter().map(|p| self.invert(p)).collect::<Result<Vec<_>>>();
        MotionSequence::new(
            map(&seq.poses_a)?,
            map(&seq.poses_b)?,
            seq.shape_a,
            seq.shape_b,
            seq.fps,
            seq.text.clone(),
        )
    }
}

/// Frame that puts `pose` at the horizontal origin facing +Z.
///
/// Height is preserved. When the body faces straight up or down the yaw is
/// left at zero and the frame is flagged as degenerate.
pub fn canonical_frame(pose: &Pose) -> CanonicalFrame {
    let f = facing_direction(pose);
    let t = pose.translation();
    let offset = Vector3::new(t.x, 0.0, t.z);
    let horizontal = (f.x * f.x + f.z * f.z).sqrt();
    if horizontal < DEGENERATE_FACING {
        log::warn!("facing direction is vertical; canonical yaw left at zero");
        return CanonicalFrame {
            yaw: 0.0,
            offset,
            degenerate: true,
        };
    }
    CanonicalFrame {
        yaw: -f.x.atan2(f.z),
        offset,
        degenerate: false,
    }
}

/// Re-expresses a clip in the frame of person a at the anchor.
///
/// Returns the clip and the frame used, so results can be mapped back.
pub fn canonicalize(clip: &InteractionClip) -> Result<(InteractionClip, CanonicalFrame)> {
    let frame = canonical_frame(clip.anchor_poses().0);
    let sequence = frame.apply_sequence(&clip.sequence)?;
    Ok((
        InteractionClip {
            sequence,
            anchor: clip.anchor,
            canonicalized: true,
        },
        frame,
    ))
}
