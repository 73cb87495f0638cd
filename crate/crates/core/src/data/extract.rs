use serde::{Deserialize, Serialize};

use super::motion::{InteractionClip, MotionSequence};
use crate::body::KinematicTree;
use crate::error::{Error, Result};

/// Contact detection and windowing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    /// Proxy distance below which two bodies are in contact, meters.
    pub contact_threshold: f64,
    pub window_seconds: f64,
    pub fps: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            contact_threshold: 0.013,
            window_seconds: 3.0,
            fps: 10.0,
        }
    }
}

impl ExtractionConfig {
    /// Clip length N.
    pub fn window_frames(&self) -> Result<usize> {
        if !(self.contact_threshold > 0.0) {
            return Err(Error::Config("extraction.contact_threshold must be positive".into()));
        }
        let n = self.window_seconds * self.fps;
        if !(n >= 1.0 && (n - n.round()).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "window_seconds * fps must be a positive integer, got {n}"
            )));
        }
        Ok(n.round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractionWarning {
    /// The sequence has fewer frames than one clip.
    TooShort { frames: usize, needed: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub clips: Vec<InteractionClip>,
    pub warnings: Vec<ExtractionWarning>,
}

/// Frames whose proxy distance falls below the contact threshold, ascending.
pub fn detect_interactive_frames(
    seq: &MotionSequence,
    tree: &KinematicTree,
    cfg: &ExtractionConfig,
) -> Result<Vec<usize>> {
    let mut frames = Vec::new();
    for i in 0..seq.len() {
        if seq.frame_distance(i, tree)? < cfg.contact_threshold {
            frames.push(i);
        }
    }
    Ok(frames)
}

/// Splits sorted frame indices into maximal runs of consecutive frames.
fn runs(frames: &[usize]) -> Vec<&[usize]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        if i == frames.len() || frames[i] != frames[i - 1] + 1 {
            if i > start {
                out.push(&frames[start..i]);
            }
            start = i;
        }
    }
    out
}

/// Cuts one clip per run of interactive frames.
///
/// The run's median frame (lower median for even runs) becomes the anchor.
/// The window is centered on it and shifted inside the sequence bounds when
/// needed, moving the anchor index instead of padding.
pub fn extract_clips(
    seq: &MotionSequence,
    tree: &KinematicTree,
    cfg: &ExtractionConfig,
) -> Result<Extraction> {
    let n = cfg.window_frames()?;
    if (seq.fps - cfg.fps).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "sequence is {} fps but extraction expects {} fps",
            seq.fps, cfg.fps
        )));
    }
    if seq.len() < n {
        log::warn!("sequence of {} frames is shorter than a {n}-frame clip", seq.len());
        return Ok(Extraction {
            clips: Vec::new(),
            warnings: vec![ExtractionWarning::TooShort {
                frames: seq.len(),
                needed: n,
            }],
        });
    }
    let frames = detect_interactive_frames(seq, tree, cfg)?;
    let mut clips = Vec::new();
    for run in runs(&frames) {
        let anchor = run[(run.len() - 1) / 2];
        let start = anchor.saturating_sub(n / 2).min(seq.len() - n);
        let clip = InteractionClip::new(
            seq.window(start, n)?,
            anchor - start,
            tree,
            cfg.contact_threshold,
        )?;
        clips.push(clip);
    }
    Ok(Extraction {
        clips,
        warnings: Vec::new(),
    })
}
