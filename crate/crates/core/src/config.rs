//! Run configuration shared by all commands.

use std::path::Path;

use candle_core::DType;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::animator::AnimatorConfig;
use crate::data::{ExtractionConfig, SynthParams};
use crate::diffusion::DdimConfig;
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::metrics::MetricsConfig;
use crate::net::OptimizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

/// Training budgets, one per trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSections {
    pub animator: OptimizerConfig,
    pub generator: OptimizerConfig,
    pub autoencoder: OptimizerConfig,
}

impl Default for OptimizerSections {
    fn default() -> Self {
        Self {
            animator: OptimizerConfig::default(),
            generator: OptimizerConfig::default(),
            autoencoder: OptimizerConfig {
                lr: 1e-3,
                steps: 500,
                ..OptimizerConfig::default()
            },
        }
    }
}

/// Every tunable of a run. Missing keys take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub precision: Precision,
    pub synth: SynthParams,
    pub extraction: ExtractionConfig,
    pub animator: AnimatorConfig,
    pub generator: GeneratorConfig,
    pub optimizer: OptimizerSections,
    pub ddim: DdimConfig,
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.animator.validate()?;
        self.generator.validate()?;
        self.optimizer.animator.validate()?;
        self.optimizer.generator.validate()?;
        self.optimizer.autoencoder.validate()?;
        self.metrics.validate()?;
        if self.extraction.fps != self.animator.fps {
            return Err(Error::Config(format!(
                "extraction.fps {} differs from animator.fps {}",
                self.extraction.fps, self.animator.fps
            )));
        }
        if self.synth.fps != self.extraction.fps {
            return Err(Error::Config("synth.fps must equal extraction.fps".into()));
        }
        let window = self.extraction.window_frames()?;
        if window != self.animator.frames {
            return Err(Error::Config(format!(
                "extraction windows hold {window} frames but animator.frames is {}",
                self.animator.frames
            )));
        }
        if self.metrics.autoencoder.frames != self.animator.frames {
            return Err(Error::Config(
                "metrics.autoencoder.frames must equal animator.frames".into(),
            ));
        }
        if self.ddim.num_steps == 0 || self.ddim.eta < 0.0 {
            return Err(Error::Config("ddim needs num_steps >= 1 and eta >= 0".into()));
        }
        Ok(())
    }

    /// SHA-256 of the fully resolved configuration, so default and explicit
    /// spellings of the same run hash equally.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_pinned() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.animator.frames, 30);
        assert_eq!(cfg.animator.fps, 10.0);
        assert_eq!(cfg.animator.schedule.steps, 1000);
        assert_eq!(cfg.ddim.num_steps, 50);
        assert_eq!(cfg.extraction.contact_threshold, 0.013);
        assert_eq!(cfg.animator.loss.inter, 0.5);
        assert_eq!(cfg.animator.augmentation_scale, 0.02);
        assert_eq!((cfg.generator.p_text, cfg.generator.p_pose), (0.8, 0.2));
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(RunConfig::from_toml("").unwrap().hash(), cfg.hash());
        let tweaked = RunConfig::from_toml("[ddim]\nnum_steps = 10\n").unwrap();
        assert_ne!(tweaked.hash(), cfg.hash());
    }

    #[test]
    fn unknown_and_inconsistent_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[animator]\nbogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[animator]\nframes = 20"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[optimizer.animator]\nlr = -1.0"), Err(Error::Config(_))));
    }
}
