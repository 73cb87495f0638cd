//! Simplified parametric skeleton.
//!
//! A 22-joint humanoid tree (pelvis root plus 21 articulated joints) whose
//! bone lengths depend affinely on a 10-dimensional shape vector. Rotations
//! are axis-angle vectors composed through the exact exponential map. Body
//! geometry is approximated by spheres sampled along every bone, which is
//! enough for contact and penetration queries.

mod kinematics;
mod pose;
mod proxy;
mod tree;

pub use kinematics::{
    bone_lengths, forward_kinematics, forward_kinematics_with_rotations, inverse_kinematics_shape,
    rest_pose_joints, JointPositions, ShapeFit,
};
pub use pose::{rotation_matrix, wrap_axis_angle, Pose, ShapeParams, SHAPE_DIM, SHAPE_LIMIT};
pub use proxy::{body_proxy, min_body_distance, pair_distance, BodyProxy, Sphere};
pub use tree::{JointSpec, KinematicTree, TreeDocument, DEFAULT_PROXY_RADIUS, TREE_FORMAT_VERSION};

/// Number of joints in the default tree.
pub const JOINT_COUNT: usize = 22;
/// Number of articulated (non-root) joints in the default tree.
pub const ARTICULATED_JOINTS: usize = JOINT_COUNT - 1;
/// Width of a flattened pose for the default tree: orientation, joint rotations, translation.
pub const POSE_DIM: usize = 3 + 3 * ARTICULATED_JOINTS + 3;
