use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset `s` of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;
/// Per-step noise fraction is capped here so that ᾱ stays positive and strictly decreasing.
pub const MAX_BETA: f64 = 0.999;

/// Schedule parameters as they appear in the run config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub cosine_offset: f64,
    pub max_beta: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            cosine_offset: COSINE_OFFSET,
            max_beta: MAX_BETA,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::cosine_with(self.steps, self.cosine_offset, self.max_beta)
    }
}

/// Cumulative signal fractions ᾱ_t for t = 0..=T.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

/// Cosine schedule with `steps` diffusion steps and the default constants.
pub fn cosine_schedule(steps: usize) -> Result<NoiseSchedule> {
    NoiseSchedule::cosine(steps)
}

impl NoiseSchedule {
    pub fn cosine(steps: usize) -> Result<Self> {
        Self::cosine_with(steps, COSINE_OFFSET, MAX_BETA)
    }

    pub fn cosine_with(steps: usize, offset: f64, max_beta: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid("schedule needs at least 2 steps"));
        }
        if !(offset > 0.0 && max_beta > 0.0 && max_beta < 1.0) {
            return Err(Error::invalid("invalid cosine schedule constants"));
        }
        let f = |t: usize| {
            let x = (t as f64 / steps as f64 + offset) / (1.0 + offset) * FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0);
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for t in 1..=steps {
            let prev = alpha_bar[t - 1];
            let direct = f(t) / f0;
            let floor = prev * (1.0 - max_beta);
            alpha_bar.push(if direct > floor { direct } else { floor });
        }
        Ok(Self { alpha_bar })
    }

    /// Builds a schedule from explicit values, checking the invariants.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 3 {
            return Err(Error::invalid("schedule needs at least 2 steps"));
        }
        if alpha_bar[0] < 1.0 - 1e-6 || alpha_bar[0] > 1.0 {
            return Err(Error::invalid("alpha_bar[0] must be 1"));
        }
        if alpha_bar.windows(2).any(|w| !(w[1] < w[0]) || w[1] <= 0.0) {
            return Err(Error::invalid("alpha_bar must be positive and strictly decreasing"));
        }
        Ok(Self { alpha_bar })
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha_bar
    }
}
