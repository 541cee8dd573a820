use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Gradients, ParameterSet};

/// Result of a clipping pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipOutcome {
    pub norm_before: f64,
    pub clipped: bool,
}

/// Rescales all gradients by `max_norm / g` when their global L2 norm `g`
/// exceeds `max_norm`.
pub fn clip_by_global_norm(grads: &mut Gradients, max_norm: f64) -> Result<ClipOutcome> {
    if !(max_norm > 0.0) {
        return Err(Error::Config(format!("max_norm must be positive, got {max_norm}")));
    }
    let norm = grads.global_norm();
    let clipped = norm > max_norm;
    if clipped {
        grads.scale(max_norm / norm);
    }
    Ok(ClipOutcome {
        norm_before: norm,
        clipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: ParameterSet,
    second_moment: ParameterSet,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &ParameterSet {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &ParameterSet {
        &self.second_moment
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut ParameterSet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    params.check_same_layout(grads, "adam_step")?;
    params.check_same_layout(&state.first_moment, "adam_step")?;
    state.step += 1;
    let AdamConfig {
        alpha,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads.at(i).values();
        let m = state.first_moment.at_mut(i).values_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = beta1 * *mj + (1.0 - beta1) * gj;
        }
        let v = state.second_moment.at_mut(i).values_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
        }
        let m = state.first_moment.at(i).values();
        let v = state.second_moment.at(i).values();
        for ((p, mj), vj) in params.at_mut(i).values_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mj / correction1;
            let v_hat = vj / correction2;
            *p -= alpha * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
