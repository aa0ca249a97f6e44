use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layers::{Module, Param};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// One bias-corrected Adam update of a single parameter from its gradient.
pub fn adam_step<T: Scalar>(p: &mut Param<T>, cfg: &AdamConfig) {
    p.step += 1;
    let t = p.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let values = p.value.data_mut();
    for i in 0..values.len() {
        let g = p.grad[i].as_f64();
        let m = cfg.beta1 * p.first_moment[i].as_f64() + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * p.second_moment[i].as_f64() + (1.0 - cfg.beta2) * g * g;
        p.first_moment[i] = T::from_f64(m);
        p.second_moment[i] = T::from_f64(v);
        let update = cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
        values[i] = T::from_f64(values[i].as_f64() - update);
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    /// Global gradient-norm clip applied before each update, if set.
    pub clip_norm: Option<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            clip_norm: None,
        })
    }

    pub fn with_clip_norm(mut self, max_norm: f64) -> Self {
        self.clip_norm = Some(max_norm);
        self
    }

    /// Updates every parameter of `module`. Nothing is modified if any
    /// gradient is non-finite.
    pub fn step<T: Scalar, M: Module<T> + ?Sized>(&self, module: &mut M) -> Result<()> {
        let mut bad = None;
        let mut sq = 0.0;
        module.visit(&mut |p| {
            for g in &p.grad {
                if !g.is_finite() {
                    bad.get_or_insert_with(|| p.name.clone());
                    return;
                }
                sq += g.as_f64() * g.as_f64();
            }
        });
        if let Some(name) = bad {
            return Err(NnError::NonFiniteGradient(name));
        }
        let scale = match self.clip_norm {
            Some(max) if sq.sqrt() > max => Some(T::from_f64(max / sq.sqrt())),
            _ => None,
        };
        let cfg = self.config;
        module.visit_mut(&mut |p| {
            if let Some(s) = scale {
                p.grad.iter_mut().for_each(|g| *g *= s);
            }
            adam_step(p, &cfg);
        });
        Ok(())
    }
}
