use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{AutoencoderConfig, FeatureExtractor};
use super::physical::{contact_ratio, penetration};
use super::stats::{diversity, frechet_from_features, mmodality, precision_recall};
use crate::body::KinematicTree;
use crate::data::{MotionSequence, Provenance};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Neighbor rank defining the precision/recall balls.
    pub k: usize,
    pub diversity_pairs: usize,
    pub mmodality_pairs: usize,
    /// Signed body distance below which a frame counts as contact, meters.
    pub contact_threshold: f64,
    pub autoencoder: AutoencoderConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            k: 3,
            diversity_pairs: 300,
            mmodality_pairs: 10,
            contact_threshold: 0.013,
            autoencoder: AutoencoderConfig::default(),
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.diversity_pairs == 0 || self.mmodality_pairs == 0 {
            return Err(Error::Config("metric k and pair counts must be positive".into()));
        }
        if !(self.contact_threshold.is_finite() && self.contact_threshold > 0.0) {
            return Err(Error::Config("contact_threshold must be positive".into()));
        }
        self.autoencoder.validate()
    }
}

/// Evaluation results for one generated set against a reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub version: u32,
    pub fid: f64,
    /// Whether a covariance needed the diagonal regularizer.
    pub fid_regularized: bool,
    pub precision: f64,
    pub recall: f64,
    pub diversity: f64,
    /// Present when at least one caption has two or more generated samples.
    pub mmodality: Option<f64>,
    /// Percent of generated frames in contact.
    pub contact_ratio: f64,
    /// Centimeters.
    pub penetration: f64,
    pub real_count: usize,
    pub generated_count: usize,
    pub feature_dim: usize,
    pub k: usize,
    pub diversity_pairs: usize,
    pub mmodality_pairs: usize,
    pub contact_threshold: f64,
    pub seed: u64,
    pub config_hash: String,
    pub toolkit_version: String,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores `generated` against `real` with features from `extractor`.
///
/// Contact ratio and penetration are averaged over the generated clips.
/// MModality groups generated clips by caption.
pub fn evaluate(
    real: &[MotionSequence],
    generated: &[MotionSequence],
    extractor: &FeatureExtractor,
    cfg: &MetricsConfig,
    tree: &KinematicTree,
    provenance: &Provenance,
) -> Result<MetricReport> {
    cfg.validate()?;
    if generated.is_empty() {
        return Err(Error::invalid("no generated motions to evaluate"));
    }
    let real_feats = extractor.features_batch(real, tree)?;
    let gen_feats = extractor.features_batch(generated, tree)?;
    let fid = frechet_from_features(&real_feats, &gen_feats)?;
    let (precision, recall) = precision_recall(&real_feats, &gen_feats, cfg.k)?;
    let seed = provenance.seed;
    let div = diversity(&gen_feats, cfg.diversity_pairs, &mut seeded(derive_seed(seed, 0)))?;

    let mut by_text: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for (seq, f) in generated.iter().zip(&gen_feats) {
        if let Some(text) = &seq.text {
            by_text.entry(text.as_str()).or_default().push(f.clone());
        }
    }
    let groups: Vec<Vec<Vec<f64>>> = by_text.into_values().filter(|g| g.len() >= 2).collect();
    let mmod = if groups.is_empty() {
        None
    } else {
        Some(mmodality(&groups, cfg.mmodality_pairs, &mut seeded(derive_seed(seed, 1)))?)
    };

    let mut contact = 0.0;
    let mut pene = 0.0;
    for seq in generated {
        contact += contact_ratio(seq, tree, cfg.contact_threshold)?;
        pene += penetration(seq, tree)?;
    }
    let n = generated.len() as f64;
    Ok(MetricReport {
        version: REPORT_VERSION,
        fid: fid.distance,
        fid_regularized: fid.regularized,
        precision,
        recall,
        diversity: div,
        mmodality: mmod,
        contact_ratio: contact / n,
        penetration: pene / n,
        real_count: real.len(),
        generated_count: generated.len(),
        feature_dim: extractor.feature_dim(),
        k: cfg.k,
        diversity_pairs: cfg.diversity_pairs,
        mmodality_pairs: cfg.mmodality_pairs,
        contact_threshold: cfg.contact_threshold,
        seed,
        config_hash: provenance.config_hash.clone(),
        toolkit_version: provenance.toolkit_version.clone(),
    })
}
