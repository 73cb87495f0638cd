use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::canonical::CanonicalFrame;
use super::motion::MotionSequence;
use crate::body::{KinematicTree, Pose, ShapeParams, ARTICULATED_JOINTS, SHAPE_DIM};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, StdRng};

const PELVIS_HEIGHT: f64 = 0.92;
const FAR: f64 = 2.4;
const NEAR: f64 = 0.5;
const MAX_ATTEMPTS: u64 = 16;

// rotation slots (joint index - 1)
const LEFT_HIP: usize = 0;
const RIGHT_HIP: usize = 1;
const SPINE1: usize = 2;
const LEFT_KNEE: usize = 3;
const RIGHT_KNEE: usize = 4;
const LEFT_SHOULDER: usize = 15;
const RIGHT_SHOULDER: usize = 16;
const LEFT_ELBOW: usize = 17;
const RIGHT_ELBOW: usize = 18;

/// Scripted interaction families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    ApproachTouchDepart,
    CircleAndClasp,
    PushImpulse,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [
        Archetype::ApproachTouchDepart,
        Archetype::CircleAndClasp,
        Archetype::PushImpulse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::ApproachTouchDepart => "approach-touch-depart",
            Archetype::CircleAndClasp => "circle-and-clasp",
            Archetype::PushImpulse => "push-impulse",
        }
    }

    /// Caption attached to generated sequences.
    pub fn caption(self) -> &'static str {
        match self {
            Archetype::ApproachTouchDepart => {
                "two people walk toward each other, one touches the other, then they walk apart"
            }
            Archetype::CircleAndClasp => "two people circle each other and then clasp hands",
            Archetype::PushImpulse => "one person walks up and pushes the other, who stumbles back",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub count: usize,
    pub frames: usize,
    pub fps: f64,
    pub archetypes: Vec<Archetype>,
    /// Standard deviation of per-joint rotation offsets, radians.
    pub pose_noise: f64,
    /// Standard deviation of shape coefficients.
    pub shape_noise: f64,
    /// Standard deviation of the contact time, as a fraction of the sequence.
    pub timing_noise: f64,
    /// Scales the random rigid placement of each scene.
    pub scene_jitter: f64,
    /// Every sequence is guaranteed a frame closer than this.
    pub contact_threshold: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            count: 24,
            frames: 80,
            fps: 10.0,
            archetypes: Archetype::ALL.to_vec(),
            pose_noise: 0.05,
            shape_noise: 0.5,
            timing_noise: 0.06,
            scene_jitter: 1.0,
            contact_threshold: 0.013,
        }
    }
}

impl SynthParams {
    /// All variation switched off.
    pub fn noiseless() -> Self {
        Self {
            pose_noise: 0.0,
            shape_noise: 0.0,
            timing_noise: 0.0,
            scene_jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Config("synth.frames must be at least 2".into()));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config("synth.fps must be positive".into()));
        }
        if self.archetypes.is_empty() {
            return Err(Error::Config("synth.archetypes is empty".into()));
        }
        let noise = [self.pose_noise, self.shape_noise, self.timing_noise, self.scene_jitter];
        if noise.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("synth noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Pose controls for one person at one frame.
#[derive(Default)]
struct Drive {
    position: [f64; 2],
    /// Yaw of the facing direction about +Y.
    heading: f64,
    reach_left: f64,
    reach_right: f64,
    /// Walking cycle phase and amplitude.
    stride: (f64, f64),
    lean: f64,
}

fn drive_pose(d: &Drive, offsets: &[Vector3<f64>]) -> Result<Pose> {
    let mut rots = vec![Vector3::zeros(); ARTICULATED_JOINTS];
    let (phase, amp) = d.stride;
    rots[LEFT_HIP].x = amp * phase.sin();
    rots[RIGHT_HIP].x = -amp * phase.sin();
    rots[LEFT_KNEE].x = amp * (0.5 + 0.5 * phase.cos());
    rots[RIGHT_KNEE].x = amp * (0.5 - 0.5 * phase.cos());
    rots[SPINE1].x = d.lean;
    // arms hang down when relaxed and point forward when reaching
    rots[LEFT_SHOULDER] = Vector3::new(0.0, -FRAC_PI_2 * d.reach_left, -1.2 * (1.0 - d.reach_left));
    rots[RIGHT_SHOULDER] = Vector3::new(0.0, FRAC_PI_2 * d.reach_right, 1.2 * (1.0 - d.reach_right));
    rots[LEFT_ELBOW].y = -0.4 * (1.0 - d.reach_left);
    rots[RIGHT_ELBOW].y = 0.4 * (1.0 - d.reach_right);
    for (r, o) in rots.iter_mut().zip(offsets) {
        *r += o;
    }
    Pose::new(
        Vector3::new(0.0, d.heading, 0.0),
        rots,
        Vector3::new(d.position[0], PELVIS_HEIGHT, d.position[1]),
    )
}

/// Places two people facing each other across `center` along `angle`.
fn facing_pair(center: [f64; 2], angle: f64, gap: f64) -> (Drive, Drive) {
    let dir = [angle.cos(), angle.sin()];
    let heading = dir[0].atan2(dir[1]);
    let a = Drive {
        position: [center[0] - dir[0] * gap / 2.0, center[1] - dir[1] * gap / 2.0],
        heading,
        ..Default::default()
    };
    let b = Drive {
        position: [center[0] + dir[0] * gap / 2.0, center[1] + dir[1] * gap / 2.0],
        heading: heading + PI,
        ..Default::default()
    };
    (a, b)
}

fn script(archetype: Archetype, u: f64, contact: f64) -> (Drive, Drive) {
    match archetype {
        Archetype::ApproachTouchDepart => {
            let s = smoothstep((u - contact).abs() / 0.4);
            let gap = NEAR + (FAR - NEAR) * s;
            let reach = 1.0 - smoothstep((u - contact).abs() / 0.25);
            let (mut a, mut b) = facing_pair([0.0, 0.0], 0.0, gap);
            a.reach_right = reach;
            b.reach_left = 0.3 * reach;
            a.stride = (2.0 * PI * 3.0 * u, 0.35 * s);
            b.stride = (2.0 * PI * 3.0 * u + PI, 0.35 * s);
            (a, b)
        }
        Archetype::CircleAndClasp => {
            let closing = smoothstep(u / contact);
            let gap = FAR - (FAR - NEAR) * closing;
            let angle = 1.5 * u.min(contact);
            let reach = smoothstep((u - contact + 0.25) / 0.25);
            let (mut a, mut b) = facing_pair([0.0, 0.0], angle, gap);
            a.reach_left = reach;
            a.reach_right = reach;
            b.reach_left = reach;
            b.reach_right = reach;
            a.stride = (2.0 * PI * 2.0 * u, 0.25 * (1.0 - closing));
            b.stride = (2.0 * PI * 2.0 * u, 0.25 * (1.0 - closing));
            (a, b)
        }
        Archetype::PushImpulse => {
            let (gap, walking) = if u <= contact {
                let s = smoothstep((contact - u) / 0.4);
                (NEAR + (FAR - NEAR) * s, s)
            } else {
                (NEAR + 1.2 * smoothstep((u - contact) / 0.12), 0.0)
            };
            let pushed = smoothstep((u - contact) / 0.12);
            let reach = 1.0 - smoothstep((u - contact).abs() / 0.2);
            let (mut a, mut b) = facing_pair([0.0, 0.0], 0.0, gap);
            a.reach_left = reach;
            a.reach_right = reach;
            a.stride = (2.0 * PI * 3.0 * u, 0.35 * walking);
            b.lean = -0.35 * pushed * (1.0 - smoothstep((u - contact - 0.15) / 0.3));
            (a, b)
        }
    }
}

fn gaussian(rng: &mut StdRng) -> f64 {
    rng.sample(StandardNormal)
}

fn generate_one(
    archetype: Archetype,
    params: &SynthParams,
    rng: &mut StdRng,
) -> Result<MotionSequence> {
    let contact = (0.5 + params.timing_noise * gaussian(rng)).clamp(0.3, 0.7);
    let offsets = |rng: &mut StdRng| {
        (0..ARTICULATED_JOINTS)
            .map(|_| Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng)) * params.pose_noise)
            .collect::<Vec<_>>()
    };
    let offsets_a = offsets(rng);
    let offsets_b = offsets(rng);
    let shape = |rng: &mut StdRng| {
        let beta: Vec<f64> = (0..SHAPE_DIM).map(|_| params.shape_noise * gaussian(rng)).collect();
        ShapeParams::from_slice(&beta)
    };
    let shape_a = shape(rng)?;
    let shape_b = shape(rng)?;
    let scene = CanonicalFrame {
        yaw: params.scene_jitter * PI * rng.random_range(-1.0..1.0),
        offset: Vector3::new(gaussian(rng), 0.0, gaussian(rng)) * params.scene_jitter,
        degenerate: false,
    };

    let mut poses_a = Vec::with_capacity(params.frames);
    let mut poses_b = Vec::with_capacity(params.frames);
    for i in 0..params.frames {
        let u = i as f64 / (params.frames - 1) as f64;
        let (a, b) = script(archetype, u, contact);
        poses_a.push(scene.invert(&drive_pose(&a, &offsets_a)?)?);
        poses_b.push(scene.invert(&drive_pose(&b, &offsets_b)?)?);
    }
    MotionSequence::new(
        poses_a,
        poses_b,
        shape_a,
        shape_b,
        params.fps,
        Some(archetype.caption().to_string()),
    )
}

/// Generates `params.count` scripted two-person sequences.
///
/// Sequence `i` uses archetype `i mod archetypes.len()` and its own random
/// stream derived from `seed`, so the output depends only on the arguments.
/// Sequences without a contact frame are redrawn.
pub fn synth_dataset(params: &SynthParams, tree: &KinematicTree, seed: u64) -> Result<Vec<MotionSequence>> {
    params.validate()?;
    let mut out = Vec::with_capacity(params.count);
    for i in 0..params.count {
        let archetype = params.archetypes[i % params.archetypes.len()];
        let stream = derive_seed(seed, i as u64);
        let mut found = None;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = seeded(derive_seed(stream, attempt));
            let seq = generate_one(archetype, params, &mut rng)?;
            let closest = seq.distances(tree)?.into_iter().fold(f64::INFINITY, f64::min);
            if closest < params.contact_threshold {
                found = Some(seq);
                break;
            }
            log::debug!("sequence {i} attempt {attempt} has no contact (closest {closest:.3} m)");
        }
        out.push(found.ok_or_else(|| {
            Error::invalid(format!("could not script a contact for sequence {i} ({})", archetype.name()))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{canonical_frame, detect_interactive_frames, ExtractionConfig};

    #[test]
    fn same_seed_same_data() {
        let tree = KinematicTree::default();
        let p = SynthParams { count: 4, ..Default::default() };
        assert_eq!(synth_dataset(&p, &tree, 7).unwrap(), synth_dataset(&p, &tree, 7).unwrap());
        assert_ne!(synth_dataset(&p, &tree, 7).unwrap(), synth_dataset(&p, &tree, 8).unwrap());
    }

    #[test]
    fn every_sequence_has_contact() {
        let tree = KinematicTree::default();
        let p = SynthParams { count: 12, ..Default::default() };
        let cfg = ExtractionConfig::default();
        for seq in synth_dataset(&p, &tree, 1).unwrap() {
            assert!(!detect_interactive_frames(&seq, &tree, &cfg).unwrap().is_empty());
        }
    }

    #[test]
    fn noiseless_data_is_analytic() {
        let tree = KinematicTree::default();
        let p = SynthParams { count: 3, ..SynthParams::noiseless() };
        let data = synth_dataset(&p, &tree, 99).unwrap();
        assert_eq!(data, synth_dataset(&p, &tree, 5).unwrap());
        let first = &data[0];
        // starts far apart, facing each other along X
        assert!((first.poses_a[0].translation().x + FAR / 2.0).abs() < 1e-12);
        assert!((first.poses_b[0].translation().x - FAR / 2.0).abs() < 1e-12);
        assert!((canonical_frame(&first.poses_a[0]).yaw.abs() - FRAC_PI_2).abs() < 1e-12);
        // closest at the middle of the sequence
        let mid = (p.frames - 1) as f64 * 0.5;
        let d = first.distances(&tree).unwrap();
        let argmin = (0..d.len()).min_by(|a, b| d[*a].total_cmp(&d[*b])).unwrap();
        assert!((argmin as f64 - mid).abs() <= 5.0, "{argmin}");
    }

    #[test]
    fn captions_follow_archetypes() {
        let tree = KinematicTree::default();
        let p = SynthParams { count: 3, ..Default::default() };
        let data = synth_dataset(&p, &tree, 3).unwrap();
        for (seq, a) in data.iter().zip(Archetype::ALL) {
            assert_eq!(seq.text.as_deref(), Some(a.caption()));
        }
    }
}
