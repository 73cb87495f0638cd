//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use candle_core::{DType, Device, Tensor};
use interpose::animator::{
    animator_loss, encode_residual, AnimatorBatch, AnimatorConfig, AnimatorModel,
};
use interpose::body::{forward_kinematics, KinematicTree};
use interpose::data::{extract_clips, synth_dataset, ExtractionConfig, InteractionClip, MotionSequence, SynthParams};
use interpose::generator::{
    generator_loss, ConditionMasks, GeneratorBatch, GeneratorConfig, GeneratorModel, GeneratorTarget, PosePair,
};
use interpose::net::{gradient_check, GradCheckReport, NetConfig, ParamStore, PERSONS};
use interpose::rng::{gaussian_tensor, gaussian_vec, seeded};

/// First extracted 30-frame clip of each of `count` synthetic sequences.
pub fn synth_clips(count: usize, seed: u64, tree: &KinematicTree) -> Vec<InteractionClip> {
    let params = SynthParams {
        count,
        ..SynthParams::default()
    };
    synth_dataset(&params, tree, seed)
        .unwrap()
        .iter()
        .map(|s| extract_clips(s, tree, &ExtractionConfig::default()).unwrap().clips.remove(0))
        .collect()
}

/// Mean distance between corresponding joints of two motions of equal length.
pub fn mean_joint_error(a: &MotionSequence, b: &MotionSequence, tree: &KinematicTree) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut total = 0.0;
    let mut count = 0;
    for n in 0..a.len() {
        for (pa, sa, pb, sb) in [
            (&a.poses_a[n], &a.shape_a, &b.poses_a[n], &b.shape_a),
            (&a.poses_b[n], &a.shape_b, &b.poses_b[n], &b.shape_b),
        ] {
            let ja = forward_kinematics(pa, sa, tree).unwrap();
            let jb = forward_kinematics(pb, sb, tree).unwrap();
            for (x, y) in ja.0.iter().zip(&jb.0) {
                total += (x - y).norm();
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Adds Gaussian noise to every parameter so zero-initialized layers carry gradient.
pub fn perturb(store: &ParamStore, std: f64, seed: u64) {
    let mut rng = seeded(seed);
    for (_, var) in store.named() {
        let noise = (gaussian_tensor(&mut rng, var.dims(), store.dtype(), &Device::Cpu).unwrap() * std).unwrap();
        var.set(&(var.as_tensor() + noise).unwrap()).unwrap();
    }
}

pub fn tiny_net(temporal: bool, feature_dim: usize) -> NetConfig {
    NetConfig {
        layers: 1,
        latent_dim: 16,
        heads: 2,
        ff_mult: 2,
        temporal_attention: temporal,
        feature_dim,
        extra_input_dim: 1,
        ..NetConfig::default()
    }
}

/// Gradient check of the full animator loss on a two-clip, six-frame batch.
pub fn animator_gradcheck(probes: usize, seed: u64) -> GradCheckReport {
    let tree = KinematicTree::default();
    let cfg = AnimatorConfig {
        net: tiny_net(true, interpose::body::POSE_DIM),
        frames: 6,
        ..AnimatorConfig::default()
    };
    let model = AnimatorModel::new(&cfg, DType::F64, seed).unwrap();
    perturb(model.store(), 0.05, seed + 1);
    let clips = synth_clips(2, seed, &tree);
    let targets: Vec<_> = clips
        .iter()
        .map(|c| {
            let start = c.anchor.saturating_sub(2).min(c.len() - 6);
            let window = InteractionClip {
                sequence: c.sequence.window(start, 6).unwrap(),
                anchor: c.anchor - start,
                canonicalized: false,
            };
            encode_residual(&window).unwrap()
        })
        .collect();
    let refs: Vec<_> = targets.iter().collect();
    let anchors: Vec<_> = targets.iter().map(|t| t.anchor.clone()).collect();
    let mut rng = seeded(seed + 2);
    let eps = gaussian_tensor(&mut rng, &[2, PERSONS, 6, interpose::body::POSE_DIM], DType::F64, &Device::Cpu).unwrap();
    let batch = AnimatorBatch::from_parts(&refs, &anchors, vec![37, 612], eps, &tree, DType::F64).unwrap();
    let loss = || -> interpose::Result<Tensor> {
        Ok(animator_loss(&batch, &model, model.schedule(), &cfg.loss, &tree)?.total)
    };
    gradient_check(model.store(), loss, probes, &mut rng).unwrap()
}

/// Gradient check of the full generator loss over all four condition combinations.
pub fn generator_gradcheck(probes: usize, seed: u64) -> GradCheckReport {
    let tree = KinematicTree::default();
    let cfg = GeneratorConfig {
        net: tiny_net(false, interpose::generator::GENERATOR_WIDTH),
        text_dim: 24,
        text_layers: 1,
        ..GeneratorConfig::default()
    };
    let model = GeneratorModel::new(&cfg, DType::F64, seed).unwrap();
    perturb(model.store(), 0.05, seed + 1);
    let clips = synth_clips(4, seed, &tree);
    let targets: Vec<_> = clips
        .iter()
        .map(|c| GeneratorTarget::new(&PosePair::from_clip(c), &tree).unwrap())
        .collect();
    let refs: Vec<_> = targets.iter().collect();
    let masks = vec![
        ConditionMasks { pose: false, text: false },
        ConditionMasks { pose: true, text: false },
        ConditionMasks { pose: false, text: true },
        ConditionMasks { pose: true, text: true },
    ];
    let mut rng = seeded(seed + 2);
    let eps_values = gaussian_vec(&mut rng, 4 * PERSONS * interpose::generator::GENERATOR_WIDTH);
    let eps = Tensor::from_vec(eps_values, (4, PERSONS, 1, interpose::generator::GENERATOR_WIDTH), &Device::Cpu).unwrap();
    let encoder = cfg.encoder();
    let batch = GeneratorBatch::from_parts(&refs, masks, vec![5, 250, 500, 990], eps, &encoder, DType::F64).unwrap();
    let loss = || -> interpose::Result<Tensor> {
        Ok(generator_loss(&batch, &model, model.schedule(), &cfg.loss, &tree)?.total)
    };
    gradient_check(model.store(), loss, probes, &mut rng).unwrap()
}
