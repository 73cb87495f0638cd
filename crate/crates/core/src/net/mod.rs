//! Trainable denoiser network and its supporting machinery.

mod checkpoint;
mod dit;
mod geometry;
mod gradcheck;
mod layers;
mod params;
mod train;

pub use checkpoint::{read_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use dit::{Activation, DitNet, NetConfig, PERSONS};
pub use geometry::{
    axis_angle_to_matrix, bone_lengths_tensor, forward_kinematics_tensor, kinematics_from_matrices, norm_last,
    offsets_tensor,
};
pub use gradcheck::{gradient_check, GradCheckReport, GradProbe, FD_STEP, GRAD_TOLERANCE};
pub use layers::{layer_norm, silu, sinusoidal, Attention, EncoderLayer, FeedForward, Linear};
pub use params::{host_tensor, tensor_values, Init, ParamStore};
pub use train::{train_loop, OptimizerConfig, TrainLog};
