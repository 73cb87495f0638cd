use std::collections::BTreeMap;

use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::{Deserialize, Serialize};

use crate::diffusion::scalar;
use crate::error::{Error, Result};

/// AdamW settings and the training budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Abort when the loss exceeds this multiple of the first step's loss.
    pub divergence_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 2000,
            batch_size: 8,
            divergence_factor: 1e3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.weight_decay >= 0.0 && self.batch_size > 0) {
            return Err(Error::Config(
                "optimizer needs lr > 0, weight_decay >= 0 and batch_size > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step loss record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub total: Vec<f64>,
    pub components: Vec<BTreeMap<String, f64>>,
}

impl TrainLog {
    pub fn initial(&self) -> Option<f64> {
        self.total.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.total.last().copied()
    }

    /// CSV with one row per step: `step,total,<components...>`.
    pub fn to_csv(&self) -> String {
        let names: Vec<&String> = self
            .components
            .first()
            .map(|c| c.keys().collect())
            .unwrap_or_default();
        let mut out = String::from("step,total");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, (t, c)) in self.total.iter().zip(&self.components).enumerate() {
            out.push_str(&format!("{i},{t}"));
            for n in &names {
                out.push_str(&format!(",{}", c.get(*n).copied().unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `cfg.steps` AdamW updates of `vars` on the loss produced by `step_fn`.
///
/// `step_fn` returns the scalar loss tensor and named components for logging.
pub fn train_loop(
    vars: Vec<Var>,
    cfg: &OptimizerConfig,
    mut step_fn: impl FnMut(usize) -> Result<(Tensor, BTreeMap<String, f64>)>,
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        },
    )?;
    let mut log = TrainLog::default();
    for step in 0..cfg.steps {
        let (loss, components) = step_fn(step).map_err(|e| match e {
            Error::Training { message, .. } => Error::Training { step, message },
            other => other,
        })?;
        let value = scalar(&loss)?;
        if !value.is_finite() {
            return Err(Error::Training {
                step,
                message: format!("non-finite loss, components {components:?}"),
            });
        }
        if let Some(initial) = log.initial() {
            if value > cfg.divergence_factor * initial {
                return Err(Error::Training {
                    step,
                    message: format!(
                        "diverged: loss {value:.4e} exceeds {}x initial {initial:.4e}",
                        cfg.divergence_factor
                    ),
                });
            }
        }
        opt.backward_step(&loss)?;
        log.total.push(value);
        log.components.push(components);
        if step % 100 == 0 {
            log::debug!("step {step}: loss {value:.6}");
        }
    }
    Ok(log)
}
