//! Interactive-pose generator: a single-frame two-person diffusion model with
//! optional pose and text conditions selected by masks.

mod infer;
mod loss;
mod model;
mod text;

pub use infer::{generate_interactive_pose, train_generator, GeneratedPair};
pub use loss::{generator_loss, GeneratorBatch, GeneratorLossWeights};
pub use model::{
    compose_generator_input, person_gates, person_tokens, sample_masks, ConditionMasks, GeneratorCondition,
    GeneratorConfig, GeneratorModel, GeneratorTarget, PosePair, GENERATOR_KIND, GENERATOR_WIDTH,
};
pub use text::{tokenize, HashedBagOfTokens, TextBatch, TextConditioner, TextEncoder, TEXT_DIM};
