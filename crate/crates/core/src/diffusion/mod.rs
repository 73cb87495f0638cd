//! Network-agnostic diffusion machinery: schedule, forward noising, the
//! x0-prediction objective and the DDIM sampler.

mod sampler;
mod schedule;

use candle_core::{DType, Tensor};
use rand::Rng;

pub use sampler::{ddim_sample, ddim_timesteps, DdimConfig, Imputer};
pub use schedule::{cosine_schedule, NoiseSchedule, ScheduleConfig, COSINE_OFFSET, MAX_BETA};

use crate::error::{Error, Result};
use crate::rng::gaussian_tensor;

/// A network that maps a noisy sample to a prediction of the clean sample.
pub trait Denoiser {
    type Condition;

    /// `timesteps` holds one diffusion step per batch element (dimension 0).
    fn predict_x0(&self, z_t: &Tensor, timesteps: &[usize], cond: &Self::Condition)
        -> Result<Tensor>;
}

/// Adapts a closure to the [`Denoiser`] trait with a unit condition.
pub struct FnDenoiser<F>(pub F);

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&Tensor, &[usize]) -> Result<Tensor>,
{
    type Condition = ();

    fn predict_x0(&self, z_t: &Tensor, timesteps: &[usize], _: &()) -> Result<Tensor> {
        (self.0)(z_t, timesteps)
    }
}

/// Broadcastable per-sample coefficient tensor of shape `[B, 1, .., 1]`.
pub(crate) fn per_sample(values: &[f64], like: &Tensor) -> Result<Tensor> {
    let mut shape = vec![1usize; like.rank()];
    shape[0] = values.len();
    Ok(Tensor::from_slice(values, shape.as_slice(), like.device())?.to_dtype(like.dtype())?)
}

/// `z_t = sqrt(ᾱ_t) z0 + sqrt(1 - ᾱ_t) eps`, with one `t` per batch element.
pub fn forward_noise(
    z0: &Tensor,
    timesteps: &[usize],
    eps: &Tensor,
    schedule: &NoiseSchedule,
) -> Result<Tensor> {
    if z0.dims() != eps.dims() {
        return Err(Error::ShapeMismatch(format!(
            "noise {:?} does not match sample {:?}",
            eps.dims(),
            z0.dims()
        )));
    }
    if z0.rank() == 0 || timesteps.len() != z0.dims()[0] {
        return Err(Error::ShapeMismatch(format!(
            "{} timesteps for batch of {:?}",
            timesteps.len(),
            z0.dims()
        )));
    }
    if let Some(t) = timesteps.iter().find(|t| **t > schedule.steps()) {
        return Err(Error::invalid(format!("timestep {t} beyond schedule")));
    }
    let signal: Vec<f64> = timesteps.iter().map(|t| schedule.alpha_bar(*t).sqrt()).collect();
    let noise: Vec<f64> = timesteps
        .iter()
        .map(|t| (1.0 - schedule.alpha_bar(*t)).sqrt())
        .collect();
    let a = per_sample(&signal, z0)?;
    let b = per_sample(&noise, z0)?;
    Ok((z0.broadcast_mul(&a)? + eps.broadcast_mul(&b)?)?)
}

/// One evaluation of the x0-prediction objective.
#[derive(Debug, Clone)]
pub struct DiffusionStep {
    /// Mean squared error between `z0` and the prediction (scalar tensor).
    pub loss: Tensor,
    pub prediction: Tensor,
    pub noisy: Tensor,
    pub timesteps: Vec<usize>,
}

/// Draws one diffusion step per batch element, uniform over `0..=T`.
pub fn sample_timesteps(rng: &mut impl Rng, batch: usize, schedule: &NoiseSchedule) -> Vec<usize> {
    (0..batch)
        .map(|_| rng.random_range(0..=schedule.steps()))
        .collect()
}

/// Squared-L2 diffusion objective `mean ‖z0 - G(z_t, t, c)‖²`.
pub fn diffusion_loss<D: Denoiser>(
    z0: &Tensor,
    cond: &D::Condition,
    denoiser: &D,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<DiffusionStep> {
    let timesteps = sample_timesteps(rng, z0.dims()[0], schedule);
    let eps = gaussian_tensor(rng, z0.dims(), z0.dtype(), z0.device())?;
    let noisy = forward_noise(z0, &timesteps, &eps, schedule)?;
    let prediction = denoiser.predict_x0(&noisy, &timesteps, cond)?;
    let loss = mse(&prediction, z0)?;
    ensure_finite(&loss, "diffusion loss")?;
    Ok(DiffusionStep {
        loss,
        prediction,
        noisy,
        timesteps,
    })
}

pub(crate) fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok((a - b)?.sqr()?.mean_all()?)
}

pub(crate) fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

pub(crate) fn ensure_finite(t: &Tensor, what: &str) -> Result<()> {
    let v = scalar(t)?;
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Training {
            step: 0,
            message: format!("{what} is not finite ({v})"),
        })
    }
}
