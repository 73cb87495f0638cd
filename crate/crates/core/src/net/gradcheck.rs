use candle_core::{DType, Tensor};
use rand::Rng;

use super::params::ParamStore;
use crate::diffusion::scalar;
use crate::error::{Error, Result};

/// Central-difference step used for 64-bit gradient checks.
pub const FD_STEP: f64 = 1e-5;
/// Maximum tolerated relative deviation between analytic and numeric gradients.
pub const GRAD_TOLERANCE: f64 = 1e-3;
/// Gradients smaller than this are compared in absolute terms.
const GRAD_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradProbe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<GradProbe>,
    pub max_relative_deviation: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_deviation <= GRAD_TOLERANCE
    }

    /// Parameter path of the worst probe when the check fails.
    pub fn failure(&self) -> Option<String> {
        if self.passed() {
            return None;
        }
        self.probes
            .iter()
            .max_by(|a, b| a.relative_deviation.total_cmp(&b.relative_deviation))
            .map(|p| {
                format!(
                    "{}[{}]: analytic {:.6e} vs numeric {:.6e}",
                    p.param, p.index, p.analytic, p.numeric
                )
            })
    }
}

fn relative_deviation(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

fn set_element(var: &candle_core::Var, index: usize, value: f64) -> Result<()> {
    let mut flat = var.as_tensor().flatten_all()?.to_vec1::<f64>()?;
    flat[index] = value;
    var.set(&Tensor::from_vec(flat, var.dims(), var.device())?)?;
    Ok(())
}

/// Compares backpropagated gradients with central finite differences at
/// `probes` randomly chosen scalar parameters.
///
/// `loss` must be a deterministic function of the parameters (fix any
/// random draws inside it) and the store must hold 64-bit parameters.
pub fn gradient_check(
    store: &ParamStore,
    loss: impl Fn() -> Result<Tensor>,
    probes: usize,
    rng: &mut impl Rng,
) -> Result<GradCheckReport> {
    if store.dtype() != DType::F64 {
        return Err(Error::invalid("gradient checks need f64 parameters"));
    }
    let named = store.named();
    if named.is_empty() {
        return Err(Error::invalid("no parameters to check"));
    }
    let base = loss()?;
    let grads = base.backward()?;
    let mut out = Vec::with_capacity(probes);
    for _ in 0..probes {
        let (name, var) = &named[rng.random_range(0..named.len())];
        let index = rng.random_range(0..var.elem_count());
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1::<f64>()?[index],
            None => 0.0,
        };
        let original = var.as_tensor().flatten_all()?.to_vec1::<f64>()?[index];
        set_element(var, index, original + FD_STEP)?;
        let plus = scalar(&loss()?)?;
        set_element(var, index, original - FD_STEP)?;
        let minus = scalar(&loss()?)?;
        set_element(var, index, original)?;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        out.push(GradProbe {
            param: name.clone(),
            index,
            analytic,
            numeric,
            relative_deviation: relative_deviation(analytic, numeric),
        });
    }
    let max_relative_deviation = out
        .iter()
        .map(|p| p.relative_deviation)
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        probes: out,
        max_relative_deviation,
    })
}
