use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub clips_per_epoch: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            base_lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_epochs: 3,
            total_epochs: 30,
            batch_size: 4,
            clips_per_epoch: 256,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("optim.{field}"), format!("must be positive, got {v}")))
            }
        };
        positive("base_lr", self.base_lr)?;
        positive("eps", self.eps)?;
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("optim.weight_decay", "must be non-negative"));
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("optim.{field}"), format!("must lie in [0, 1), got {b}")));
            }
        }
        if self.warmup_epochs >= self.total_epochs {
            return Err(Error::config(
                "optim.warmup_epochs",
                format!("{} warm-up epochs leave nothing of {} total", self.warmup_epochs, self.total_epochs),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("optim.batch_size", "must be positive"));
        }
        if self.clips_per_epoch < self.batch_size {
            return Err(Error::config("optim.clips_per_epoch", "must be at least one batch"));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.clips_per_epoch / self.batch_size
    }
}

/// Linear warm-up from 0 to `base_lr`, then half-cosine decay to 0 at the end of training.
pub fn lr_at(step: usize, steps_per_epoch: usize, cfg: &OptimConfig) -> f64 {
    let warmup = (cfg.warmup_epochs * steps_per_epoch) as f64;
    let total = (cfg.total_epochs * steps_per_epoch) as f64;
    let s = step as f64;
    if s < warmup {
        return cfg.base_lr * s / warmup;
    }
    let p = ((s - warmup) / (total - warmup)).min(1.0);
    cfg.base_lr * 0.5 * (1.0 + (PI * p).cos())
}

/// First and second moments of every parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        let z: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { m: z.clone(), v: z }
    }
}

/// One AdamW update at step `t >= 1`. Decay is applied to the weights directly.
pub fn adamw_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    t: usize,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("adamw_step", "step counter starts at 1"));
    }
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(
            "adamw_step",
            format!(
                "{} params, {} grads, {} / {} moments",
                params.len(),
                grads.len(),
                state.m.len(),
                state.v.len()
            ),
        ));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() {
            return Err(Error::shape(
                "adamw_step",
                format!("param {i} is {:?}, gradient {:?}", p.shape(), g.shape()),
            ));
        }
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            *w *= 1.0 - lr * cfg.weight_decay;
            *w -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}
