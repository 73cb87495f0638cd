use crate::body::{pair_distance, KinematicTree, Pose, ShapeParams};
use crate::error::{Error, Result};

/// Synchronized pose tracks of two persons.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub poses_a: Vec<Pose>,
    pub poses_b: Vec<Pose>,
    pub shape_a: ShapeParams,
    pub shape_b: ShapeParams,
    pub fps: f64,
    pub text: Option<String>,
}

impl MotionSequence {
    pub fn new(
        poses_a: Vec<Pose>,
        poses_b: Vec<Pose>,
        shape_a: ShapeParams,
        shape_b: ShapeParams,
        fps: f64,
        text: Option<String>,
    ) -> Result<Self> {
        let seq = Self {
            poses_a,
            poses_b,
            shape_a,
            shape_b,
            fps,
            text,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Checks track lengths, frame rate and per-pose articulation counts.
    ///
    /// Single-frame sequences are allowed so that pose pairs share the format.
    pub fn validate(&self) -> Result<()> {
        if self.poses_a.len() != self.poses_b.len() {
            return Err(Error::invalid(format!(
                "track lengths differ: {} vs {}",
                self.poses_a.len(),
                self.poses_b.len()
            )));
        }
        if self.poses_a.is_empty() {
            return Err(Error::invalid("sequence has no frames"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {}", self.fps)));
        }
        let joints = self.poses_a[0].joint_rotations().len();
        if self
            .poses_a
            .iter()
            .chain(&self.poses_b)
            .any(|p| p.joint_rotations().len() != joints)
        {
            return Err(Error::invalid("poses disagree on joint count"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses_a.is_empty()
    }

    /// Frames `start..start + len` as a new sequence.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() || len == 0 {
            return Err(Error::invalid(format!(
                "window {start}+{len} outside sequence of {} frames",
                self.len()
            )));
        }
        Ok(Self {
            poses_a: self.poses_a[start..start + len].to_vec(),
            poses_b: self.poses_b[start..start + len].to_vec(),
            shape_a: self.shape_a,
            shape_b: self.shape_b,
            fps: self.fps,
            text: self.text.clone(),
        })
    }

    /// Signed proxy distance between the two bodies at `frame`.
    pub fn frame_distance(&self, frame: usize, tree: &KinematicTree) -> Result<f64> {
        pair_distance(
            &self.poses_a[frame],
            &self.shape_a,
            &self.poses_b[frame],
            &self.shape_b,
            tree,
        )
    }

    /// Per-frame signed distances.
    pub fn distances(&self, tree: &KinematicTree) -> Result<Vec<f64>> {
        (0..self.len()).map(|i| self.frame_distance(i, tree)).collect()
    }
}

/// A fixed-length window around one interactive pose.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionClip {
    pub sequence: MotionSequence,
    /// Frame index I of the interactive pose.
    pub anchor: usize,
    pub canonicalized: bool,
}

impl InteractionClip {
    /// Builds a clip and verifies that the anchor frame is in contact.
    pub fn new(
        sequence: MotionSequence,
        anchor: usize,
        tree: &KinematicTree,
        contact_threshold: f64,
    ) -> Result<Self> {
        sequence.validate()?;
        if anchor >= sequence.len() {
            return Err(Error::invalid(format!(
                "anchor {anchor} outside clip of {} frames",
                sequence.len()
            )));
        }
        let d = sequence.frame_distance(anchor, tree)?;
        if d >= contact_threshold {
            return Err(Error::invalid(format!(
                "anchor frame {anchor} is not in contact (distance {d:.4} m)"
            )));
        }
        Ok(Self {
            sequence,
            anchor,
            canonicalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// The interactive pose pair.
    pub fn anchor_poses(&self) -> (&Pose, &Pose) {
        (
            &self.sequence.poses_a[self.anchor],
            &self.sequence.poses_b[self.anchor],
        )
    }
}
