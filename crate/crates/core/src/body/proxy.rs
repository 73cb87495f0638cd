use nalgebra::Vector3;

use super::kinematics::forward_kinematics;
use super::pose::{Pose, ShapeParams};
use super::tree::KinematicTree;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Sphere approximation of a posed body.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyProxy {
    pub spheres: Vec<Sphere>,
}

/// Samples spheres uniformly along every posed bone (endpoints included).
pub fn body_proxy(pose: &Pose, shape: &ShapeParams, tree: &KinematicTree) -> Result<BodyProxy> {
    let joints = forward_kinematics(pose, shape, tree)?;
    let samples = tree.samples_per_bone();
    let mut spheres = Vec::with_capacity(tree.bone_count() * samples);
    for k in 1..tree.joint_count() {
        let start = joints.0[tree.parent(k).unwrap()];
        let end = joints.0[k];
        for i in 0..samples {
            let s = i as f64 / (samples - 1) as f64;
            spheres.push(Sphere {
                center: start + (end - start) * s,
                radius: tree.radius(k),
            });
        }
    }
    Ok(BodyProxy { spheres })
}

/// Smallest surface gap between two proxies; negative means overlap.
pub fn min_body_distance(a: &BodyProxy, b: &BodyProxy) -> f64 {
    let mut best = f64::INFINITY;
    for sa in &a.spheres {
        for sb in &b.spheres {
            let gap = (sa.center - sb.center).norm() - (sa.radius + sb.radius);
            best = best.min(gap);
        }
    }
    best
}

/// Signed distance between two posed bodies.
pub fn pair_distance(
    pose_a: &Pose,
    shape_a: &ShapeParams,
    pose_b: &Pose,
    shape_b: &ShapeParams,
    tree: &KinematicTree,
) -> Result<f64> {
    Ok(min_body_distance(
        &body_proxy(pose_a, shape_a, tree)?,
        &body_proxy(pose_b, shape_b, tree)?,
    ))
}
