use candle_core::{DType, Device, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::rng::gaussian_tensor;

/// Rewrites the sampling iterate before every denoiser call (conditioning by imputation).
pub type Imputer<'a> = &'a dyn Fn(&Tensor) -> Result<Tensor>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdimConfig {
    pub num_steps: usize,
    pub eta: f64,
}

impl Default for DdimConfig {
    fn default() -> Self {
        Self {
            num_steps: 50,
            eta: 0.0,
        }
    }
}

/// Evenly spaced decreasing steps from T down to 0 (inclusive), `num_steps + 1` entries.
pub fn ddim_timesteps(total: usize, num_steps: usize) -> Result<Vec<usize>> {
    if num_steps == 0 || num_steps > total {
        return Err(Error::invalid(format!(
            "DDIM needs 1..={total} steps, got {num_steps}"
        )));
    }
    Ok((0..=num_steps)
        .map(|i| {
            let frac = (num_steps - i) as f64 / num_steps as f64;
            (total as f64 * frac).round() as usize
        })
        .collect())
}

/// DDIM sampling on x0 predictions.
///
/// Starts from Gaussian noise of `shape`, visits the steps of
/// [`ddim_timesteps`] and returns the final clean-sample prediction. The
/// imputer, when given, is applied to the iterate before each denoiser call
/// and to the returned prediction.
#[allow(clippy::too_many_arguments)]
pub fn ddim_sample<D: Denoiser>(
    denoiser: &D,
    cond: &D::Condition,
    shape: &[usize],
    schedule: &NoiseSchedule,
    cfg: &DdimConfig,
    rng: &mut impl Rng,
    imputer: Option<Imputer<'_>>,
    dtype: DType,
) -> Result<Tensor> {
    if cfg.eta < 0.0 || !cfg.eta.is_finite() {
        return Err(Error::invalid("eta must be non-negative"));
    }
    let steps = ddim_timesteps(schedule.steps(), cfg.num_steps)?;
    let device = Device::Cpu;
    let batch = shape[0];
    let mut x = gaussian_tensor(rng, shape, dtype, &device)?;
    let mut x0 = x.zeros_like()?;
    for pair in steps.windows(2) {
        let (t, prev) = (pair[0], pair[1]);
        if let Some(f) = imputer {
            x = f(&x)?;
        }
        x0 = denoiser.predict_x0(&x, &vec![t; batch], cond)?;
        if prev == 0 {
            break;
        }
        let ab_t = schedule.alpha_bar(t);
        let ab_prev = schedule.alpha_bar(prev);
        let eps = ((&x - (&x0 * ab_t.sqrt())?)? / (1.0 - ab_t).sqrt())?;
        let sigma =
            cfg.eta * ((1.0 - ab_prev) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_prev).sqrt();
        let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
        x = ((&x0 * ab_prev.sqrt())? + (eps * dir)?)?;
        if sigma > 0.0 {
            let noise = gaussian_tensor(rng, shape, dtype, &device)?;
            x = (x + (noise * sigma)?)?;
        }
    }
    match imputer {
        Some(f) => f(&x0),
        None => Ok(x0),
    }
}
