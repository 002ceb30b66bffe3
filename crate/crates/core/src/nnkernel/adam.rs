use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Moment accumulators for every parameter tensor of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P, config: AdamConfig) -> Self {
        let sizes: Vec<usize> = params.named_params().iter().map(|(_, p)| p.len()).collect();
        Self {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One bias-corrected Adam update. Coordinates whose gradient is exactly
    /// zero are left alone, moments included.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let named = grads.named_params();
        if named.len() != self.first.len() {
            return Err(shape_err(
                "adam_step",
                format!("{} parameter tensors", self.first.len()),
                format!("{}", named.len()),
            ));
        }
        for ((name, g), m) in named.iter().zip(&self.first) {
            if g.len() != m.len() {
                return Err(shape_err("adam_step", format!("{name} of length {}", m.len()), format!("{}", g.len())));
            }
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name} at index {pos}")));
            }
        }

        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(beta1, t);
        let bc2 = 1.0 - libm::pow(beta2, t);

        let mut targets = params.params_mut();
        if targets.len() != named.len() {
            return Err(shape_err(
                "adam_step",
                format!("{} parameter tensors", named.len()),
                format!("{}", targets.len()),
            ));
        }
        for (idx, ((_, g), p)) in named.iter().zip(targets.iter_mut()).enumerate() {
            if p.len() != g.len() {
                return Err(shape_err("adam_step", format!("{} values", g.len()), format!("{}", p.len())));
            }
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            for i in 0..g.len() {
                let gi = g[i];
                if gi == 0.0 {
                    continue;
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}
