use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::pose::{ShapeParams, SHAPE_DIM, SHAPE_LIMIT};
use crate::error::{Error, Result};

pub const TREE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PROXY_RADIUS: f64 = 0.06;
const DEFAULT_SAMPLES_PER_BONE: usize = 3;

/// Kinematic tree with an affine shape model on bone lengths.
///
/// Joints are stored in topological order: every parent index is smaller
/// than its child's. Bone `k` connects `parent(k)` to joint `k`, so bone
/// quantities are indexed by their child joint.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vector3<f64>>,
    shape_basis: Vec<[f64; SHAPE_DIM]>,
    radii: Vec<f64>,
    samples_per_bone: usize,
}

/// One joint of the serialized tree document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
    pub shape_basis: [f64; SHAPE_DIM],
    pub radius: f64,
}

/// JSON form of a [`KinematicTree`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDocument {
    pub version: u32,
    pub samples_per_bone: usize,
    pub joints: Vec<JointSpec>,
}

// (name, parent, offset)
const HUMANOID: [(&str, Option<usize>, [f64; 3]); 22] = [
    ("pelvis", None, [0.0, 0.0, 0.0]),
    ("left_hip", Some(0), [0.09, -0.06, 0.0]),
    ("right_hip", Some(0), [-0.09, -0.06, 0.0]),
    ("spine1", Some(0), [0.0, 0.11, -0.02]),
    ("left_knee", Some(1), [0.0, -0.38, 0.0]),
    ("right_knee", Some(2), [0.0, -0.38, 0.0]),
    ("spine2", Some(3), [0.0, 0.13, 0.01]),
    ("left_ankle", Some(4), [0.0, -0.40, -0.03]),
    ("right_ankle", Some(5), [0.0, -0.40, -0.03]),
    ("spine3", Some(6), [0.0, 0.05, 0.02]),
    ("left_foot", Some(7), [0.0, -0.05, 0.12]),
    ("right_foot", Some(8), [0.0, -0.05, 0.12]),
    ("neck", Some(9), [0.0, 0.21, -0.03]),
    ("left_collar", Some(9), [0.07, 0.12, -0.01]),
    ("right_collar", Some(9), [-0.07, 0.12, -0.01]),
    ("head", Some(12), [0.0, 0.09, 0.05]),
    ("left_shoulder", Some(13), [0.12, 0.03, -0.01]),
    ("right_shoulder", Some(14), [-0.12, 0.03, -0.01]),
    ("left_elbow", Some(16), [0.26, 0.0, -0.02]),
    ("right_elbow", Some(17), [-0.26, 0.0, -0.02]),
    ("left_wrist", Some(18), [0.25, 0.0, 0.0]),
    ("right_wrist", Some(19), [-0.25, 0.0, 0.0]),
];

/// Shape directions: (component, bones it lengthens or shortens, coefficient).
const SHAPE_DIRECTIONS: [(usize, &[usize], f64); 14] = [
    // overall stature
    (0, &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21], 0.018),
    // legs against torso
    (1, &[4, 5, 7, 8], 0.015),
    (1, &[3, 6, 9, 12], -0.015),
    // arm length
    (2, &[16, 17, 18, 19, 20, 21], 0.016),
    // shoulder and hip width
    (3, &[1, 2, 13, 14], 0.017),
    // neck and head
    (4, &[12, 15], 0.017),
    // forearm against upper arm
    (5, &[18, 19], 0.015),
    (5, &[20, 21], -0.015),
    // shank against thigh
    (6, &[4, 5], 0.015),
    (6, &[7, 8], -0.015),
    // left/right asymmetry
    (7, &[16, 18, 20], 0.01),
    (8, &[4, 7, 10], 0.01),
    // feet and lower spine
    (9, &[10, 11], 0.017),
    (9, &[3], 0.01),
];

impl Default for KinematicTree {
    /// The 22-joint humanoid used throughout the toolkit.
    fn default() -> Self {
        let mut basis = vec![[0.0; SHAPE_DIM]; HUMANOID.len()];
        for (component, bones, coef) in SHAPE_DIRECTIONS {
            for &b in bones {
                basis[b][component] += coef;
            }
        }
        Self::new(
            HUMANOID.iter().map(|(n, _, _)| n.to_string()).collect(),
            HUMANOID.iter().map(|(_, p, _)| *p).collect(),
            HUMANOID.iter().map(|(_, _, o)| Vector3::from(*o)).collect(),
            basis,
            vec![DEFAULT_PROXY_RADIUS; HUMANOID.len()],
            DEFAULT_SAMPLES_PER_BONE,
        )
        .expect("default tree is valid")
    }
}

impl KinematicTree {
    pub fn new(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        offsets: Vec<Vector3<f64>>,
        shape_basis: Vec<[f64; SHAPE_DIM]>,
        radii: Vec<f64>,
        samples_per_bone: usize,
    ) -> Result<Self> {
        let n = parents.len();
        if n < 2 {
            return Err(Error::invalid("tree needs at least one bone"));
        }
        if names.len() != n || offsets.len() != n || shape_basis.len() != n || radii.len() != n {
            return Err(Error::invalid("tree arrays have inconsistent lengths"));
        }
        if parents[0].is_some() {
            return Err(Error::invalid("joint 0 must be the root"));
        }
        for (k, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < k => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "joint {k} ({}) needs a parent with a smaller index",
                        names[k]
                    )))
                }
            }
            if !(offsets[k].iter().all(|x| x.is_finite()) && offsets[k].norm() > 0.0) {
                return Err(Error::invalid(format!("joint {k} has a degenerate offset")));
            }
            let spread: f64 = shape_basis[k].iter().map(|s| s.abs()).sum();
            if !spread.is_finite() || 1.0 - SHAPE_LIMIT * spread <= 0.0 {
                return Err(Error::invalid(format!(
                    "shape basis row {k} allows non-positive bone length"
                )));
            }
            if !(radii[k].is_finite() && radii[k] > 0.0) {
                return Err(Error::invalid(format!("joint {k} has invalid proxy radius")));
            }
        }
        if samples_per_bone < 3 {
            return Err(Error::invalid("need at least 3 proxy samples per bone"));
        }
        Ok(Self {
            names,
            parents,
            offsets,
            shape_basis,
            radii,
            samples_per_bone,
        })
    }

    /// A straight chain of `lengths.len()` bones along +Y, with no shape dependence.
    pub fn chain(lengths: &[f64], radius: f64) -> Result<Self> {
        let n = lengths.len() + 1;
        Self::new(
            (0..n).map(|i| format!("j{i}")).collect(),
            (0..n).map(|i| i.checked_sub(1)).collect(),
            std::iter::once(Vector3::zeros())
                .chain(lengths.iter().map(|l| Vector3::new(0.0, *l, 0.0)))
                .collect(),
            vec![[0.0; SHAPE_DIM]; n],
            vec![radius; n],
            DEFAULT_SAMPLES_PER_BONE,
        )
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn bone_count(&self) -> usize {
        self.parents.len() - 1
    }

    /// Flattened pose width for this tree.
    pub fn pose_dim(&self) -> usize {
        3 * self.joint_count() + 3
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn base_offset(&self, joint: usize) -> &Vector3<f64> {
        &self.offsets[joint]
    }

    pub fn shape_basis_row(&self, joint: usize) -> &[f64; SHAPE_DIM] {
        &self.shape_basis[joint]
    }

    pub fn radius(&self, joint: usize) -> f64 {
        self.radii[joint]
    }

    pub fn samples_per_bone(&self) -> usize {
        self.samples_per_bone
    }

    pub fn with_samples_per_bone(mut self, samples: usize) -> Result<Self> {
        if samples < 3 {
            return Err(Error::invalid("need at least 3 proxy samples per bone"));
        }
        self.samples_per_bone = samples;
        Ok(self)
    }

    /// Multiplicative length scale of bone `joint` under `shape`.
    pub fn bone_scale(&self, joint: usize, shape: &ShapeParams) -> f64 {
        1.0 + self.shape_basis[joint]
            .iter()
            .zip(shape.beta())
            .map(|(s, b)| s * b)
            .sum::<f64>()
    }

    /// Offset of `joint` in its parent frame after shape scaling.
    pub fn scaled_offset(&self, joint: usize, shape: &ShapeParams) -> Vector3<f64> {
        self.offsets[joint] * self.bone_scale(joint, shape)
    }

    pub fn to_document(&self) -> TreeDocument {
        TreeDocument {
            version: TREE_FORMAT_VERSION,
            samples_per_bone: self.samples_per_bone,
            joints: (0..self.joint_count())
                .map(|k| JointSpec {
                    name: self.names[k].clone(),
                    parent: self.parents[k],
                    offset: self.offsets[k].into(),
                    shape_basis: self.shape_basis[k],
                    radius: self.radii[k],
                })
                .collect(),
        }
    }

    pub fn from_document(doc: TreeDocument) -> Result<Self> {
        if doc.version != TREE_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported tree format version {}",
                doc.version
            )));
        }
        let mut names = Vec::new();
        let mut parents = Vec::new();
        let mut offsets = Vec::new();
        let mut basis = Vec::new();
        let mut radii = Vec::new();
        for j in doc.joints {
            names.push(j.name);
            parents.push(j.parent);
            offsets.push(Vector3::from(j.offset));
            basis.push(j.shape_basis);
            radii.push(j.radius);
        }
        Self::new(names, parents, offsets, basis, radii, doc.samples_per_bone)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TreeDocument =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("tree json: {e}")))?;
        Self::from_document(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tree_is_humanoid() {
        let t = KinematicTree::default();
        assert_eq!(t.joint_count(), 22);
        assert_eq!(t.bone_count(), 21);
        assert_eq!(t.pose_dim(), 69);
        assert_eq!(t.names()[15], "head");
    }

    #[test]
    fn bone_scales_stay_positive_at_shape_limits() {
        let t = KinematicTree::default();
        for sign in [-1.0, 1.0] {
            for k in 1..t.joint_count() {
                let beta = t.shape_basis_row(k).map(|s| sign * SHAPE_LIMIT * s.signum());
                let s = ShapeParams::new(beta).unwrap();
                assert!(t.bone_scale(k, &s) > 0.0);
            }
        }
    }

    #[test]
    fn rejects_cycles_and_zero_offsets() {
        let t = KinematicTree::default();
        let mut doc = t.to_document();
        doc.joints[3].parent = Some(5);
        assert!(KinematicTree::from_document(doc).is_err());

        let mut doc = t.to_document();
        doc.joints[4].offset = [0.0; 3];
        assert!(KinematicTree::from_document(doc).is_err());
    }

    #[test]
    fn canonical_file_matches_default() {
        let shipped = include_str!("../../assets/skeleton.json");
        assert_eq!(
            KinematicTree::from_json(shipped).unwrap(),
            KinematicTree::default()
        );
    }

    #[test]
    fn json_round_trip() {
        let t = KinematicTree::default();
        assert_eq!(KinematicTree::from_json(&t.to_json()).unwrap(), t);
        assert!(KinematicTree::from_json("{\"version\":1}").is_err());
    }
}
