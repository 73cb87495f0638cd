//! Differentiable rotation and kinematics ops used by the training losses.

use candle_core::{DType, Device, Tensor, D};

use crate::body::{KinematicTree, ShapeParams};
use crate::error::{Error, Result};

/// Added to θ² before the square root so gradients stay finite at zero rotation.
const ANGLE_EPS: f64 = 1e-12;

/// Rodrigues formula on `[..., 3]` axis-angle vectors, giving `[..., 3, 3]`.
///
/// Uses `R = I + (sin θ / θ) K + (2 sin²(θ/2) / θ²) K²` with `K` the skew
/// matrix of the unnormalized vector.
pub fn axis_angle_to_matrix(aa: &Tensor) -> Result<Tensor> {
    let dims = aa.dims().to_vec();
    if dims.last() != Some(&3) {
        return Err(Error::ShapeMismatch(format!("axis-angle tensor {dims:?} must end in 3")));
    }
    let m: usize = dims[..dims.len() - 1].iter().product();
    let v = aa.reshape((m, 3))?;
    let x = v.narrow(1, 0, 1)?;
    let y = v.narrow(1, 1, 1)?;
    let z = v.narrow(1, 2, 1)?;
    let zero = x.zeros_like()?;
    let k = Tensor::cat(
        &[&zero, &z.neg()?, &y, &z, &zero, &x.neg()?, &y.neg()?, &x, &zero],
        1,
    )?
    .reshape((m, 3, 3))?;
    let theta = (v.sqr()?.sum_keepdim(1)? + ANGLE_EPS)?.sqrt()?;
    let a = (theta.sin()? / &theta)?.reshape((m, 1, 1))?;
    let half = (theta.clone() * 0.5)?.sin()?;
    let b = ((half.sqr()? * 2.0)? / theta.sqr()?)?.reshape((m, 1, 1))?;
    let eye = Tensor::eye(3, aa.dtype(), aa.device())?.reshape((1, 3, 3))?;
    let r = eye
        .broadcast_add(&k.broadcast_mul(&a)?)?
        .broadcast_add(&k.matmul(&k)?.broadcast_mul(&b)?)?;
    let mut out = dims;
    out.push(3);
    Ok(r.reshape(out)?)
}

/// Shape-scaled bone offsets of every joint, `[J, 3]` (the root row is zero).
pub fn offsets_tensor(tree: &KinematicTree, shape: &ShapeParams, dtype: DType) -> Result<Tensor> {
    let mut values = Vec::with_capacity(3 * tree.joint_count());
    values.extend([0.0; 3]);
    for k in 1..tree.joint_count() {
        values.extend(tree.scaled_offset(k, shape).iter());
    }
    Ok(Tensor::from_vec(values, (tree.joint_count(), 3), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Forward kinematics on `M` bodies at once.
///
/// `params`: `[M, 3 + 3(J-1) + 3]` pose parameters; `offsets`: `[M, J, 3]`.
/// Returns world joints `[M, J, 3]` and root rotations `[M, 3, 3]`.
pub fn forward_kinematics_tensor(
    params: &Tensor,
    offsets: &Tensor,
    tree: &KinematicTree,
) -> Result<(Tensor, Tensor)> {
    let j = tree.joint_count();
    let (m, width) = params.dims2()?;
    if width != 3 * j + 3 || offsets.dims() != [m, j, 3] {
        return Err(Error::ShapeMismatch(format!(
            "fk inputs {:?} / {:?} do not fit a {j}-joint tree",
            params.dims(),
            offsets.dims()
        )));
    }
    let rots = axis_angle_to_matrix(&params.narrow(1, 0, 3 * j)?.reshape((m, j, 3))?)?;
    let trans = params.narrow(1, 3 * j, 3)?;
    kinematics_from_matrices(&rots, &trans, offsets, tree)
}

/// Forward kinematics from per-joint local rotation matrices `[M, J, 3, 3]`
/// and root translations `[M, 3]`.
pub fn kinematics_from_matrices(
    rots: &Tensor,
    trans: &Tensor,
    offsets: &Tensor,
    tree: &KinematicTree,
) -> Result<(Tensor, Tensor)> {
    let j = tree.joint_count();
    let m = trans.dims2()?.0;
    let mut global: Vec<Tensor> = Vec::with_capacity(j);
    let mut positions: Vec<Tensor> = Vec::with_capacity(j);
    global.push(rots.narrow(1, 0, 1)?.squeeze(1)?.contiguous()?);
    positions.push(trans.contiguous()?);
    for k in 1..j {
        let p = tree.parent(k).expect("non-root joint has a parent");
        let offset = offsets.narrow(1, k, 1)?.reshape((m, 3, 1))?;
        let step = global[p].matmul(&offset)?.squeeze(2)?;
        positions.push((&positions[p] + step)?);
        let local = rots.narrow(1, k, 1)?.squeeze(1)?.contiguous()?;
        global.push(global[p].matmul(&local)?);
    }
    let joints = Tensor::stack(&positions, 1)?;
    Ok((joints, global[0].clone()))
}

/// Euclidean norm along the last axis, smoothed at zero.
pub fn norm_last(x: &Tensor) -> Result<Tensor> {
    Ok((x.sqr()?.sum(D::Minus1)? + ANGLE_EPS)?.sqrt()?)
}

/// Bone lengths `[M, J-1]` of joint sets `[M, J, 3]`.
pub fn bone_lengths_tensor(joints: &Tensor, tree: &KinematicTree) -> Result<Tensor> {
    let parents: Vec<u32> = (1..tree.joint_count())
        .map(|k| tree.parent(k).expect("non-root joint has a parent") as u32)
        .collect();
    let idx = Tensor::new(parents.as_slice(), joints.device())?;
    let parent_pos = joints.index_select(&idx, 1)?;
    let child_pos = joints.narrow(1, 1, tree.joint_count() - 1)?;
    norm_last(&(child_pos - parent_pos)?)
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;
    use rand::Rng;

    use super::*;
    use crate::body::{bone_lengths, forward_kinematics, rest_pose_joints, rotation_matrix, Pose};
    use crate::rng::seeded;

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let mut v = || Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let orient = v();
        let rots = (0..21).map(|_| v()).collect();
        Pose::new(orient, rots, v()).unwrap()
    }

    #[test]
    fn rodrigues_matches_reference() {
        let mut rng = seeded(0);
        let mut vs: Vec<Vector3<f64>> = (0..20)
            .map(|_| Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        vs.push(Vector3::zeros());
        vs.push(Vector3::new(1e-7, 0.0, -2e-7));
        let flat: Vec<f64> = vs.iter().flat_map(|v| v.iter().copied()).collect();
        let t = Tensor::from_vec(flat, (vs.len(), 3), &Device::Cpu).unwrap();
        let r = axis_angle_to_matrix(&t).unwrap().to_vec3::<f64>().unwrap();
        for (v, m) in vs.iter().zip(&r) {
            let reference = rotation_matrix(v);
            for a in 0..3 {
                for b in 0..3 {
                    assert!((m[a][b] - reference[(a, b)]).abs() < 1e-9, "{v:?}");
                }
            }
        }
    }

    #[test]
    fn tensor_fk_matches_scalar_fk() {
        let tree = KinematicTree::default();
        let mut rng = seeded(1);
        let mut params = Vec::new();
        let mut offsets = Vec::new();
        let mut expected = Vec::new();
        for i in 0..6 {
            let pose = random_pose(&mut rng);
            let beta: Vec<f64> = (0..10).map(|k| ((i * 10 + k) as f64).sin()).collect();
            let shape = ShapeParams::from_slice(&beta).unwrap();
            params.extend(pose.to_params());
            offsets.push(offsets_tensor(&tree, &shape, DType::F64).unwrap());
            expected.push(forward_kinematics(&pose, &shape, &tree).unwrap());
        }
        let params = Tensor::from_vec(params, (6, 69), &Device::Cpu).unwrap();
        let offsets = Tensor::stack(&offsets, 0).unwrap();
        let (joints, root) = forward_kinematics_tensor(&params, &offsets, &tree).unwrap();
        let joints = joints.to_vec3::<f64>().unwrap();
        for (got, want) in joints.iter().zip(&expected) {
            for (g, w) in got.iter().zip(&want.0) {
                for a in 0..3 {
                    assert!((g[a] - w[a]).abs() < 1e-9);
                }
            }
        }
        assert_eq!(root.dims(), &[6, 3, 3]);
    }

    #[test]
    fn bone_lengths_match_scalar() {
        let tree = KinematicTree::default();
        let shape = ShapeParams::from_slice(&[1.0, -2.0, 0.5, 0.0, 0.3, 1.0, -1.0, 2.0, 0.0, 0.1]).unwrap();
        let rest = rest_pose_joints(&shape, &tree).unwrap();
        let flat = Tensor::from_vec(rest.flatten(), (1, 22, 3), &Device::Cpu).unwrap();
        let got = bone_lengths_tensor(&flat, &tree).unwrap().to_vec2::<f64>().unwrap();
        let want = bone_lengths(&rest, &tree).unwrap();
        for (g, w) in got[0].iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
    }
}
