use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GradStore, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::invalid(format!("invalid Adam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First/second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new<P: ParamSet + ?Sized>(config: AdamConfig, params: &P) -> Result<Self> {
        config.validate()?;
        let mut moments = BTreeMap::new();
        params.visit(&mut |name, _, v| {
            moments.insert(
                name.to_string(),
                Moments {
                    m: vec![0.0; v.len()],
                    v: vec![0.0; v.len()],
                },
            );
        });
        Ok(AdamState {
            config,
            step: 0,
            moments,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.moments.get(name).map(|m| m.m.as_slice())
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f64]> {
        self.moments.get(name).map(|m| m.v.as_slice())
    }
}

/// One bias-corrected Adam update of `params` using `grads`.
///
/// ```text
/// t += 1
/// m = β1·m + (1 − β1)·g          v = β2·v + (1 − β2)·g²
/// p -= lr · (m / (1 − β1ᵗ)) / (sqrt(v / (1 − β2ᵗ)) + ε)
/// ```
pub fn adam_step<P: ParamSet + ?Sized>(state: &mut AdamState, params: &mut P, grads: &GradStore) -> Result<()> {
    grads.check_matches(params)?;
    let mut err = None;
    params.visit(&mut |name, _, v| {
        if err.is_none() && state.moments.get(name).map(|m| m.m.len()) != Some(v.len()) {
            err = Some(Error::invalid(format!("optimizer state has no moments shaped for '{name}'")));
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let moments = &mut state.moments;
    params.visit_mut(&mut |name, _, values| {
        let g = grads.get(name).expect("checked above");
        let mom = moments.get_mut(name).expect("checked above");
        for k in 0..values.len() {
            let gk = g[k];
            mom.m[k] = beta1 * mom.m[k] + (1.0 - beta1) * gk;
            mom.v[k] = beta2 * mom.v[k] + (1.0 - beta2) * gk * gk;
            let m_hat = mom.m[k] / bc1;
            let v_hat = mom.v[k] / bc2;
            values[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    });
    Ok(())
}
