use crate::body::KinematicTree;
use crate::data::MotionSequence;
use crate::error::{Error, Result};

/// Percentage of frames whose signed body distance is below `threshold` meters.
pub fn contact_ratio_from_distances(distances: &[f64], threshold: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::invalid("contact ratio of an empty motion"));
    }
    let hits = distances.iter().filter(|d| **d < threshold).count();
    Ok(100.0 * hits as f64 / distances.len() as f64)
}

/// Mean per-frame overlap depth in centimeters; frames without overlap count as 0.
pub fn penetration_from_distances(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::invalid("penetration of an empty motion"));
    }
    let depth: f64 = distances.iter().map(|d| (-d).max(0.0)).sum();
    Ok(100.0 * depth / distances.len() as f64)
}

pub fn contact_ratio(seq: &MotionSequence, tree: &KinematicTree, threshold: f64) -> Result<f64> {
    contact_ratio_from_distances(&seq.distances(tree)?, threshold)
}

pub fn penetration(seq: &MotionSequence, tree: &KinematicTree) -> Result<f64> {
    penetration_from_distances(&seq.distances(tree)?)
}
