use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::pose::{rotation_matrix, Pose, ShapeParams};
use super::tree::KinematicTree;
use crate::error::{Error, Result};

/// World-frame joint positions, one per tree joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPositions(pub Vec<Vector3<f64>>);

impl JointPositions {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() % 3 != 0 {
            return Err(Error::invalid("joint vector length is not a multiple of 3"));
        }
        Ok(Self(
            values
                .chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
        ))
    }
}

/// Forward kinematics that also returns each joint's global rotation.
pub fn forward_kinematics_with_rotations(
    pose: &Pose,
    shape: &ShapeParams,
    tree: &KinematicTree,
) -> Result<(JointPositions, Vec<Matrix3<f64>>)> {
    let n = tree.joint_count();
    if pose.joint_rotations().len() != n - 1 {
        return Err(Error::invalid(format!(
            "pose has {} joint rotations, tree needs {}",
            pose.joint_rotations().len(),
            n - 1
        )));
    }
    let mut rotations = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    rotations.push(rotation_matrix(pose.global_orient()));
    positions.push(*pose.translation());
    for k in 1..n {
        let p = tree.parent(k).expect("non-root joint has a parent");
        let parent_rot = rotations[p];
        positions.push(positions[p] + parent_rot * tree.scaled_offset(k, shape));
        rotations.push(parent_rot * rotation_matrix(&pose.joint_rotations()[k - 1]));
    }
    Ok((JointPositions(positions), rotations))
}

/// World joint positions for a posed, shaped body.
pub fn forward_kinematics(
    pose: &Pose,
    shape: &ShapeParams,
    tree: &KinematicTree,
) -> Result<JointPositions> {
    forward_kinematics_with_rotations(pose, shape, tree).map(|(j, _)| j)
}

/// Joint positions of the zero pose at the origin.
pub fn rest_pose_joints(shape: &ShapeParams, tree: &KinematicTree) -> Result<JointPositions> {
    forward_kinematics(&Pose::zero(tree.bone_count()), shape, tree)
}

/// Length of every bone, indexed by child joint minus one.
pub fn bone_lengths(joints: &JointPositions, tree: &KinematicTree) -> Result<Vec<f64>> {
    if joints.len() != tree.joint_count() {
        return Err(Error::invalid(format!(
            "expected {} joints, got {}",
            tree.joint_count(),
            joints.len()
        )));
    }
    if joints.0.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(Error::invalid("joint positions are not finite"));
    }
    Ok((1..tree.joint_count())
        .map(|k| (joints.0[k] - joints.0[tree.parent(k).unwrap()]).norm())
        .collect())
}

/// Result of fitting shape coefficients to observed bone lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFit {
    pub shape: ShapeParams,
    /// Euclidean norm of the bone-length residual, meters.
    pub residual_norm: f64,
    pub rank: usize,
    /// Set when the shape basis is rank deficient and the minimum-norm solution was used.
    pub degenerate: bool,
}

/// Least-squares shape recovery from rest-pose joints.
///
/// Bone length `k` is `|o_k| (1 + S_k · beta)`, so the fit is the linear
/// system `|o_k| S_k · beta = L_k - |o_k|`, solved through the SVD
/// pseudo-inverse (minimum-norm when rank deficient).
pub fn inverse_kinematics_shape(
    rest_joints: &JointPositions,
    tree: &KinematicTree,
) -> Result<ShapeFit> {
    let lengths = bone_lengths(rest_joints, tree)?;
    let bones = tree.bone_count();
    let dims = super::SHAPE_DIM;
    let mut a = DMatrix::<f64>::zeros(bones, dims);
    let mut b = DVector::<f64>::zeros(bones);
    for k in 1..=bones {
        let base = tree.base_offset(k).norm();
        for j in 0..dims {
            a[(k - 1, j)] = base * tree.shape_basis_row(k)[j];
        }
        b[k - 1] = lengths[k - 1] - base;
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * 1e-10 * bones.max(dims) as f64;
    let rank = svd.rank(tol);
    let beta = if sigma_max == 0.0 {
        DVector::zeros(dims)
    } else {
        svd.solve(&b, tol)
            .map_err(|e| Error::invalid(format!("shape solve failed: {e}")))?
    };
    let mut coeffs = [0.0; super::SHAPE_DIM];
    coeffs.copy_from_slice(beta.as_slice());
    let shape = ShapeParams::new(coeffs)?;
    let fitted = DVector::from_column_slice(shape.beta());
    let residual_norm = (&a * fitted - &b).norm();
    Ok(ShapeFit {
        shape,
        residual_norm,
        rank,
        degenerate: rank < dims,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::body::{SHAPE_DIM, SHAPE_LIMIT};

    fn assert_joints(j: &JointPositions, expected: &[[f64; 3]], tol: f64) {
        for (p, e) in j.0.iter().zip(expected) {
            assert!((p - Vector3::from(*e)).norm() < tol, "{p:?} vs {e:?}");
        }
    }

    /// Rodrigues formula written out independently of nalgebra's rotation types.
    fn rodrigues(v: &Vector3<f64>) -> Matrix3<f64> {
        let theta = v.norm();
        if theta == 0.0 {
            return Matrix3::identity();
        }
        let k = v / theta;
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Matrix3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
    }

    fn homogeneous(r: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }

    /// Composes 4x4 joint transforms down the tree.
    fn transform_oracle(pose: &Pose, shape: &ShapeParams, tree: &KinematicTree) -> Vec<Vector3<f64>> {
        let mut world: Vec<Matrix4<f64>> = Vec::new();
        world.push(homogeneous(
            rodrigues(pose.global_orient()),
            *pose.translation(),
        ));
        for k in 1..tree.joint_count() {
            let p = tree.parent(k).unwrap();
            let scale = 1.0
                + (0..SHAPE_DIM)
                    .map(|j| tree.shape_basis_row(k)[j] * shape.beta()[j])
                    .sum::<f64>();
            let local = homogeneous(
                rodrigues(&pose.joint_rotations()[k - 1]),
                tree.base_offset(k) * scale,
            );
            world.push(world[p] * local);
        }
        world
            .iter()
            .map(|m| Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]))
            .collect()
    }

    pub(crate) fn random_pose(rng: &mut impl Rng, bones: usize) -> Pose {
        let mut v = || Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let orient = v();
        let rots = (0..bones).map(|_| v()).collect();
        let trans = v();
        Pose::new(orient, rots, trans).unwrap()
    }

    pub(crate) fn random_shape(rng: &mut impl Rng) -> ShapeParams {
        ShapeParams::new(std::array::from_fn(|_| rng.random_range(-SHAPE_LIMIT..SHAPE_LIMIT))).unwrap()
    }

    #[test]
    fn chain_identity_pose() {
        let tree = KinematicTree::chain(&[0.5, 0.5], 0.05).unwrap();
        let j = forward_kinematics(&Pose::zero(2), &ShapeParams::zero(), &tree).unwrap();
        assert_joints(&j, &[[0.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 1.0, 0.0]], 1e-15);
    }

    #[test]
    fn chain_root_rotated_about_z() {
        let tree = KinematicTree::chain(&[0.5, 0.5], 0.05).unwrap();
        let pose = Pose::new(Vector3::new(0.0, 0.0, FRAC_PI_2), vec![Vector3::zeros(); 2], Vector3::zeros()).unwrap();
        let j = forward_kinematics(&pose, &ShapeParams::zero(), &tree).unwrap();
        assert_joints(&j, &[[0.0, 0.0, 0.0], [-0.5, 0.0, 0.0], [-1.0, 0.0, 0.0]], 1e-12);
        // Independent transform composition agrees on the same case.
        let oracle = transform_oracle(&pose, &ShapeParams::zero(), &tree);
        for (a, b) in j.0.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn matches_transform_oracle_on_random_poses() {
        let tree = KinematicTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let pose = random_pose(&mut rng, tree.bone_count());
            let shape = random_shape(&mut rng);
            let j = forward_kinematics(&pose, &shape, &tree).unwrap();
            for (a, b) in j.0.iter().zip(transform_oracle(&pose, &shape, &tree)) {
                worst = worst.max((a - b).abs().max());
            }
        }
        assert!(worst < 1e-9, "max abs error {worst}");
    }

    #[test]
    fn rejects_wrong_rotation_count() {
        let tree = KinematicTree::default();
        assert!(forward_kinematics(&Pose::zero(3), &ShapeParams::zero(), &tree).is_err());
    }

    #[test]
    fn rest_joints_accumulate_base_offsets() {
        let tree = KinematicTree::default();
        let j = rest_pose_joints(&ShapeParams::zero(), &tree).unwrap();
        for k in 1..tree.joint_count() {
            let p = tree.parent(k).unwrap();
            assert_eq!(j.0[k], j.0[p] + tree.base_offset(k));
        }
    }

    #[test]
    fn single_bone_scaling_moves_only_its_subtree() {
        // left_elbow bone (joint 18) is the only one driven by component 0 here.
        let mut doc = KinematicTree::default().to_document();
        for joint in &mut doc.joints {
            joint.shape_basis = [0.0; SHAPE_DIM];
        }
        doc.joints[18].shape_basis[0] = 0.02;
        let tree = KinematicTree::from_document(doc).unwrap();
        let mut beta = [0.0; SHAPE_DIM];
        beta[0] = 5.0;
        let shape = ShapeParams::new(beta).unwrap();
        let base = rest_pose_joints(&ShapeParams::zero(), &tree).unwrap();
        let scaled = rest_pose_joints(&shape, &tree).unwrap();
        let shift = tree.base_offset(18) * 0.1;
        for k in 0..tree.joint_count() {
            let moved = scaled.0[k] - base.0[k];
            let in_subtree = [18, 20].contains(&k);
            let expected = if in_subtree { shift } else { Vector3::zeros() };
            assert!((moved - expected).norm() < 1e-12, "joint {k}");
        }
    }

    #[test]
    fn rest_joints_equal_zero_pose_fk() {
        let tree = KinematicTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let shape = random_shape(&mut rng);
            assert_eq!(
                rest_pose_joints(&shape, &tree).unwrap(),
                forward_kinematics(&Pose::zero(21), &shape, &tree).unwrap()
            );
        }
    }

    #[test]
    fn bone_lengths_follow_affine_shape_model() {
        let tree = KinematicTree::default();
        let zero = bone_lengths(&rest_pose_joints(&ShapeParams::zero(), &tree).unwrap(), &tree).unwrap();
        for k in 1..tree.joint_count() {
            assert!((zero[k - 1] - tree.base_offset(k).norm()).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let shape = random_shape(&mut rng);
            let pose = random_pose(&mut rng, 21);
            let lengths = bone_lengths(&forward_kinematics(&pose, &shape, &tree).unwrap(), &tree).unwrap();
            for k in 1..tree.joint_count() {
                let affine: f64 = 1.0
                    + tree.shape_basis_row(k).iter().zip(shape.beta()).map(|(s, b)| s * b).sum::<f64>();
                let expected = affine * tree.base_offset(k).norm();
                assert!(((lengths[k - 1] - expected) / expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bone_lengths_are_isometry_invariant() {
        let tree = KinematicTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = random_shape(&mut rng);
        let pose = random_pose(&mut rng, 21);
        let j = forward_kinematics(&pose, &shape, &tree).unwrap();
        let r = rodrigues(&Vector3::new(0.3, -1.2, 0.7));
        let t = Vector3::new(4.0, -2.0, 1.0);
        let moved = JointPositions(j.0.iter().map(|p| r * p + t).collect());
        let a = bone_lengths(&j, &tree).unwrap();
        let b = bone_lengths(&moved, &tree).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ik_round_trip() {
        let tree = KinematicTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let shape = random_shape(&mut rng);
            let rest = rest_pose_joints(&shape, &tree).unwrap();
            let fit = inverse_kinematics_shape(&rest, &tree).unwrap();
            assert!(!fit.degenerate);
            assert_eq!(fit.rank, SHAPE_DIM);
            let expected = bone_lengths(&rest, &tree).unwrap();
            let got = bone_lengths(&rest_pose_joints(&fit.shape, &tree).unwrap(), &tree).unwrap();
            for (e, g) in expected.iter().zip(&got) {
                assert!(((e - g) / e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ik_zero_shape() {
        let tree = KinematicTree::default();
        let rest = rest_pose_joints(&ShapeParams::zero(), &tree).unwrap();
        let fit = inverse_kinematics_shape(&rest, &tree).unwrap();
        assert!(fit.shape.beta().iter().all(|b| b.abs() < 1e-12));
        assert!(fit.residual_norm < 1e-12);
    }

    #[test]
    fn ik_with_noisy_joints_stays_close() {
        let tree = KinematicTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let shape = random_shape(&mut rng);
            let rest = rest_pose_joints(&shape, &tree).unwrap();
            // displace every joint by exactly 1 mm in a random direction
            let noisy = JointPositions(
                rest.0
                    .iter()
                    .map(|p| {
                        let d = Vector3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        )
                        .normalize();
                        p + d * 1e-3
                    })
                    .collect(),
            );
            let fit = inverse_kinematics_shape(&noisy, &tree).unwrap();
            let target = bone_lengths(&noisy, &tree).unwrap();
            let got = bone_lengths(&rest_pose_joints(&fit.shape, &tree).unwrap(), &tree).unwrap();
            for (t, g) in target.iter().zip(&got) {
                assert!((t - g).abs() < 2e-3, "{t} vs {g}");
            }
        }
    }

    #[test]
    fn ik_rank_deficient_basis_is_flagged() {
        let tree = KinematicTree::chain(&[0.4, 0.3], 0.05).unwrap();
        let rest = rest_pose_joints(&ShapeParams::zero(), &tree).unwrap();
        let fit = inverse_kinematics_shape(&rest, &tree).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.rank, 0);
        assert_eq!(fit.shape, ShapeParams::zero());
    }
}
