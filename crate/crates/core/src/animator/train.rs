use candle_core::DType;
use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::{animator_loss, AnimatorBatch};
use super::model::{AnchorSampling, AnimatorConfig, AnimatorModel};
use super::target::{canonical_target, AnimatorTarget};
use crate::body::KinematicTree;
use crate::data::InteractionClip;
use crate::error::{Error, Result};
use crate::net::{train_loop, OptimizerConfig, TrainLog};
use crate::rng::{derive_seed, seeded, StdRng};

/// Hands out dataset indices epoch by epoch in shuffled order.
pub(crate) struct EpochSampler {
    order: Vec<usize>,
    next: usize,
}

impl EpochSampler {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            order: (0..len).collect(),
            next: len,
        }
    }

    pub(crate) fn draw(&mut self, count: usize, rng: &mut StdRng) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.next == self.order.len() {
                self.order.shuffle(rng);
                self.next = 0;
            }
            out.push(self.order[self.next]);
            self.next += 1;
        }
        out
    }
}

/// Trains an animator on interaction clips.
///
/// Model initialization and batch drawing use separate streams derived from
/// `seed`, so a fixed seed reproduces the run exactly.
pub fn train_animator(
    clips: &[InteractionClip],
    cfg: &AnimatorConfig,
    opt: &OptimizerConfig,
    tree: &KinematicTree,
    dtype: DType,
    seed: u64,
) -> Result<(AnimatorModel, TrainLog)> {
    if clips.is_empty() {
        return Err(Error::invalid("animator training needs at least one clip"));
    }
    if let Some(c) = clips.iter().find(|c| c.len() != cfg.frames) {
        return Err(Error::invalid(format!(
            "clip of {} frames does not match configured length {}",
            c.len(),
            cfg.frames
        )));
    }
    let model = AnimatorModel::new(cfg, dtype, derive_seed(seed, 0))?;
    let fixed: Vec<AnimatorTarget> = match cfg.anchor_sampling {
        AnchorSampling::Clip => clips
            .iter()
            .map(|c| canonical_target(&c.sequence, c.anchor))
            .collect::<Result<_>>()?,
        AnchorSampling::Uniform => Vec::new(),
    };
    let mut rng = seeded(derive_seed(seed, 1));
    let mut sampler = EpochSampler::new(clips.len());
    log::info!(
        "training animator: {} clips, {} parameters, {} steps",
        clips.len(),
        model.store().parameter_count(),
        opt.steps
    );
    let log = train_loop(model.store().vars(), opt, |_| {
        let picks = sampler.draw(opt.batch_size, &mut rng);
        let drawn: Vec<AnimatorTarget>;
        let targets: Vec<&AnimatorTarget> = match cfg.anchor_sampling {
            AnchorSampling::Clip => picks.iter().map(|i| &fixed[*i]).collect(),
            AnchorSampling::Uniform => {
                drawn = picks
                    .iter()
                    .map(|i| {
                        let anchor = rng.random_range(0..cfg.frames);
                        canonical_target(&clips[*i].sequence, anchor)
                    })
                    .collect::<Result<_>>()?;
                drawn.iter().collect()
            }
        };
        let batch = AnimatorBatch::sample(&targets, cfg.augmentation_scale, model.schedule(), tree, dtype, &mut rng)?;
        let out = animator_loss(&batch, &model, model.schedule(), &cfg.loss, tree)?;
        Ok((out.total, out.components))
    })?;
    Ok((model, log))
}
