use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};

pub const SHAPE_DIM: usize = 10;
/// Shape coefficients are clamped to `[-SHAPE_LIMIT, SHAPE_LIMIT]`.
pub const SHAPE_LIMIT: f64 = 5.0;

/// Wraps an axis-angle vector so that its magnitude is at most π.
///
/// The rotation it represents is unchanged.
pub fn wrap_axis_angle(v: Vector3<f64>) -> Vector3<f64> {
    let angle = v.norm();
    if angle <= PI {
        return v;
    }
    let axis = v / angle;
    let reduced = angle.rem_euclid(2.0 * PI);
    if reduced > PI {
        axis * (reduced - 2.0 * PI)
    } else {
        axis * reduced
    }
}

/// Exponential map from axis-angle to a rotation matrix.
pub fn rotation_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*v).into_inner()
}

fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    for (i, x) in values.into_iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::invalid(format!("{what}[{i}] is not finite")));
        }
    }
    Ok(())
}

/// Body shape coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams([f64; SHAPE_DIM]);

impl ShapeParams {
    /// Validates finiteness and clamps each coefficient to the shape limit.
    pub fn new(beta: [f64; SHAPE_DIM]) -> Result<Self> {
        check_finite(beta, "beta")?;
        Ok(Self(beta.map(|b| b.clamp(-SHAPE_LIMIT, SHAPE_LIMIT))))
    }

    pub fn from_slice(beta: &[f64]) -> Result<Self> {
        let arr: [f64; SHAPE_DIM] = beta.try_into().map_err(|_| {
            Error::invalid(format!(
                "shape needs {SHAPE_DIM} coefficients, got {}",
                beta.len()
            ))
        })?;
        Self::new(arr)
    }

    pub fn zero() -> Self {
        Self([0.0; SHAPE_DIM])
    }

    pub fn beta(&self) -> &[f64; SHAPE_DIM] {
        &self.0
    }
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self::zero()
    }
}

/// Articulated pose of one person: root orientation, per-joint local
/// rotations (axis-angle, radians) and root translation (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    global_orient: Vector3<f64>,
    joint_rotations: Vec<Vector3<f64>>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(
        global_orient: Vector3<f64>,
        joint_rotations: Vec<Vector3<f64>>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        check_finite(global_orient.iter().copied(), "global_orient")?;
        check_finite(
            joint_rotations.iter().flat_map(|r| r.iter().copied()),
            "joint_rotations",
        )?;
        check_finite(translation.iter().copied(), "translation")?;
        Ok(Self {
            global_orient: wrap_axis_angle(global_orient),
            joint_rotations: joint_rotations.into_iter().map(wrap_axis_angle).collect(),
            translation,
        })
    }

    /// Identity pose at the origin with `articulated` joint rotations.
    pub fn zero(articulated: usize) -> Self {
        Self {
            global_orient: Vector3::zeros(),
            joint_rotations: vec![Vector3::zeros(); articulated],
            translation: Vector3::zeros(),
        }
    }

    /// Inverse of [`Pose::to_params`].
    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() < 6 || params.len() % 3 != 0 {
            return Err(Error::invalid(format!(
                "pose parameter vector has invalid length {}",
                params.len()
            )));
        }
        let v = |i: usize| Vector3::new(params[i], params[i + 1], params[i + 2]);
        let n = params.len();
        let rotations = (3..n - 3).step_by(3).map(v).collect();
        Self::new(v(0), rotations, v(n - 3))
    }

    /// Flattens as `[orient(3), rotations(3·J), translation(3)]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        out.extend(self.global_orient.iter());
        for r in &self.joint_rotations {
            out.extend(r.iter());
        }
        out.extend(self.translation.iter());
        out
    }

    pub fn param_len(&self) -> usize {
        6 + 3 * self.joint_rotations.len()
    }

    pub fn global_orient(&self) -> &Vector3<f64> {
        &self.global_orient
    }

    pub fn joint_rotations(&self) -> &[Vector3<f64>] {
        &self.joint_rotations
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Replaces the root transform, keeping the articulation.
    pub fn with_root(&self, global_orient: Vector3<f64>, translation: Vector3<f64>) -> Result<Self> {
        Self::new(global_orient, self.joint_rotations.clone(), translation)
    }
}
