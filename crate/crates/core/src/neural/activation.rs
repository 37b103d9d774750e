use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Derivative of ReLU, taking the subgradient at 0 to be 0.
#[inline]
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Elementwise nonlinearity applied after a layer's linear part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, pre: &Matrix) -> Matrix {
        match self {
            Activation::Relu => pre.map(relu),
            Activation::Identity => pre.clone(),
        }
    }

    /// `dy ∘ ρ'(pre)`
    pub fn backprop(self, pre: &Matrix, dy: &Matrix) -> Matrix {
        match self {
            Activation::Relu => {
                let mut out = dy.clone();
                for (d, &p) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *d *= relu_grad(p);
                }
                out
            }
            Activation::Identity => dy.clone(),
        }
    }
}
