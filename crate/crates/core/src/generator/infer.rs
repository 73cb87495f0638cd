use candle_core::{DType, Tensor};
use rand::Rng;

use super::loss::{generator_loss, GeneratorBatch};
use super::model::{
    person_gates, person_tokens, GeneratorCondition, GeneratorConfig, GeneratorModel, GeneratorTarget, PosePair,
    GENERATOR_WIDTH,
};
use super::text::{TextBatch, TextEncoder};
use crate::animator::EpochSampler;
use crate::body::{inverse_kinematics_shape, JointPositions, KinematicTree, Pose, ShapeFit, ShapeParams, POSE_DIM};
use crate::data::{canonical_frame, CanonicalFrame};
use crate::diffusion::{ddim_sample, DdimConfig};
use crate::error::{Error, Result};
use crate::net::{host_tensor, tensor_values, train_loop, OptimizerConfig, TrainLog, PERSONS};
use crate::rng::{derive_seed, seeded};

/// Trains a generator on interactive pose pairs.
pub fn train_generator(
    pairs: &[PosePair],
    cfg: &GeneratorConfig,
    opt: &OptimizerConfig,
    tree: &KinematicTree,
    dtype: DType,
    seed: u64,
) -> Result<(GeneratorModel, TrainLog)> {
    if pairs.is_empty() {
        return Err(Error::invalid("generator training needs at least one pose pair"));
    }
    let model = GeneratorModel::new(cfg, dtype, derive_seed(seed, 0))?;
    let targets: Vec<GeneratorTarget> = pairs.iter().map(|p| GeneratorTarget::new(p, tree)).collect::<Result<_>>()?;
    let encoder = cfg.encoder();
    let mut rng = seeded(derive_seed(seed, 1));
    let mut sampler = EpochSampler::new(targets.len());
    log::info!(
        "training generator: {} pairs, {} parameters, {} steps",
        targets.len(),
        model.store().parameter_count(),
        opt.steps
    );
    let log = train_loop(model.store().vars(), opt, |_| {
        let picks: Vec<&GeneratorTarget> = sampler.draw(opt.batch_size, &mut rng).into_iter().map(|i| &targets[i]).collect();
        let batch = GeneratorBatch::sample(&picks, cfg.p_text, cfg.p_pose, &encoder, model.schedule(), dtype, &mut rng)?;
        let out = generator_loss(&batch, &model, model.schedule(), &cfg.loss, tree)?;
        Ok((out.total, out.components))
    })?;
    Ok((model, log))
}

/// Output of [`generate_interactive_pose`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPair {
    pub poses: [Pose; 2],
    pub shapes: [ShapeParams; 2],
    /// IK fits for shapes recovered from generated rest joints (`None` when given).
    pub fits: [Option<ShapeFit>; 2],
}

fn decode_person(tokens: &[f64], tree: &KinematicTree) -> Result<(Pose, ShapeFit)> {
    let pose = Pose::from_params(&tokens[..POSE_DIM])?;
    let fit = inverse_kinematics_shape(&JointPositions::from_flat(&tokens[POSE_DIM..])?, tree)?;
    Ok((pose, fit))
}

/// Samples an interactive pose pair under any subset of conditions.
///
/// A given `pose_a` is canonicalized, imputed at every sampling step and
/// returned verbatim together with its shape; person b is mapped back into
/// `pose_a`'s world frame. Generated shapes come from IK on the generated
/// rest joints.
pub fn generate_interactive_pose(
    model: &GeneratorModel,
    pose_a: Option<(&Pose, &ShapeParams)>,
    text: Option<&str>,
    tree: &KinematicTree,
    ddim: &DdimConfig,
    rng: &mut impl Rng,
) -> Result<GeneratedPair> {
    let dtype = model.dtype();
    let encoder = model.config().encoder();
    let tokens = text.map(|t| encoder.encode_tokens(t)).unwrap_or_default();
    let text_batch = TextBatch::new(&[tokens], &[text.is_some()], encoder.dim(), dtype)?;
    let (frame, known) = match pose_a {
        Some((pose, shape)) => {
            let frame = canonical_frame(pose);
            let mut row = person_tokens(&frame.apply(pose)?, shape, tree)?;
            row.extend(vec![0.0; GENERATOR_WIDTH]);
            (frame, row)
        }
        None => (CanonicalFrame::identity(), vec![0.0; PERSONS * GENERATOR_WIDTH]),
    };
    let cond = GeneratorCondition {
        known: host_tensor(known, &[1, PERSONS, 1, GENERATOR_WIDTH], dtype)?,
        gates: person_gates(&[pose_a.is_some()], dtype)?,
        text: text_batch,
    };
    let imputer = |z: &Tensor| super::model::compose_generator_input(z, &cond.known, &cond.gates);
    let z0 = ddim_sample(
        model,
        &cond,
        &[1, PERSONS, 1, GENERATOR_WIDTH],
        model.schedule(),
        ddim,
        rng,
        Some(&imputer),
        dtype,
    )?;
    let values = tensor_values(&z0)?;
    let (pose_b, fit_b) = decode_person(&values[GENERATOR_WIDTH..], tree)?;
    let pose_b = frame.invert(&pose_b)?;
    let (pose_a, shape_a, fit_a) = match pose_a {
        Some((pose, shape)) => (pose.clone(), *shape, None),
        None => {
            let (pose, fit) = decode_person(&values[..GENERATOR_WIDTH], tree)?;
            (pose, fit.shape, Some(fit))
        }
    };
    Ok(GeneratedPair {
        poses: [pose_a, pose_b],
        shapes: [shape_a, fit_b.shape],
        fits: [fit_a, Some(fit_b)],
    })
}
