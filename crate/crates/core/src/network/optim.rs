use serde::{Deserialize, Serialize};

use super::{Gradients, ProjectionNet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient. Zero disables it.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::InvalidConfig("adam betas must be in [0,1) and eps > 0".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Optimizer state for one network. Adam moments are shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, net: &ProjectionNet) -> Self {
        let shapes: Vec<usize> = net
            .layers()
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        let (m, v) = match config.kind {
            OptimizerKind::Adam => (
                shapes.iter().map(|&n| vec![0.0; n]).collect(),
                shapes.iter().map(|&n| vec![0.0; n]).collect(),
            ),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Self { config, m, v, t: 0 }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut ProjectionNet, grads: &Gradients) {
        self.t += 1;
        let c = self.config;
        let lr = c.learning_rate;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in net.tensors_mut().zip(grads.tensors()) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= lr * (gi + c.weight_decay * *pi);
                    }
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - c.beta1.powi(self.t as i32);
                let bc2 = 1.0 - c.beta2.powi(self.t as i32);
                for (((p, g), m), v) in net
                    .tensors_mut()
                    .zip(grads.tensors())
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    for (((pi, gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let gi = gi + c.weight_decay * *pi;
                        *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                        *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                        let mhat = *mi / bc1;
                        let vhat = *vi / bc2;
                        *pi -= lr * mhat / (vhat.sqrt() + c.eps);
                    }
                }
            }
        }
    }
}
