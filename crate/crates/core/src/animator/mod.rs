//! Interactive-pose animator: a residual motion diffusion model anchored on
//! one pose pair at a chosen frame.

mod infer;
mod loss;
mod model;
mod target;
mod train;

pub use infer::{animate, chain_long_motion};
pub use loss::{animator_loss, AnimatorBatch, AnimatorLossWeights, LossOutput};
pub use model::{impute, AnchorSampling, AnimatorCondition, AnimatorConfig, AnimatorModel, ANIMATOR_KIND};
pub use target::{
    anchor_joint_features, augment_anchor, decode_residual, encode_residual, AnchorMask, AnimatorTarget,
    AUGMENTATION_SCALE,
};
pub use train::train_animator;
pub(crate) use train::EpochSampler;
