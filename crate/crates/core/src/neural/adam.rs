use serde::{Deserialize, Serialize};

use super::param::Param;
use crate::error::{shape_err, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments for an ordered list of parameters.
///
/// Moment buffers are allocated on the first step; every later step must
/// pass parameters of the same shapes in the same order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
            self.v = self.m.clone();
        }
        if params.len() != self.m.len() {
            return Err(shape_err("AdamState::step", format!("{} parameters", self.m.len()), params.len()));
        }
        for (i, p) in params.iter().enumerate() {
            if p.value.shape() != self.m[i].shape() || p.grad.shape() != p.value.shape() {
                return Err(shape_err(
                    "AdamState::step",
                    format!("{:?} for parameter {i}", self.m[i].shape()),
                    format!("value {:?}, grad {:?}", p.value.shape(), p.grad.shape()),
                ));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grads = p.grad.as_slice().to_vec();
            for (((x, g), mi), vi) in p
                .value
                .as_mut_slice()
                .iter_mut()
                .zip(&grads)
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
