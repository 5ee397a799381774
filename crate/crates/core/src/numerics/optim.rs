use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdamW,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps_stab: f32,
    /// Decoupled decay, used by AdamW only.
    pub weight_decay: f32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f32) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(lr)
        }
    }

    pub fn adam(lr: f32) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps_stab: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw(lr: f32) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            weight_decay: 0.01,
            ..Self::adam(lr)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-parameter optimizer state (moments and step counter).
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: OptimizerConfig,
    m: Tensor<f32>,
    v: Tensor<f32>,
    t: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, shape: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, param: &mut Tensor<f32>, grad: &Tensor<f32>) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m.shape() {
            return Err(Error::shape(format!(
                "optimizer state {:?}, param {:?}, grad {:?}",
                self.m.shape(),
                param.shape(),
                grad.shape()
            )));
        }
        let c = self.config;
        self.t += 1;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in param.data_mut().iter_mut().zip(grad.data()) {
                    *p -= c.lr * g;
                }
            }
            OptimizerKind::Adam | OptimizerKind::AdamW => {
                if c.kind == OptimizerKind::AdamW && c.weight_decay > 0.0 {
                    let keep = 1.0 - c.lr * c.weight_decay;
                    for p in param.data_mut() {
                        *p *= keep;
                    }
                }
                let t = self.t as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                let m = self.m.data_mut();
                let v = self.v.data_mut();
                for (((p, &g), m), v) in param
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps_stab);
                }
            }
        }
        Ok(())
    }
}
