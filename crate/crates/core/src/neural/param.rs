use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// A learnable matrix with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Matrix::zeros(r, c),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameter initialization.
///
/// Feature-mixing matrices are Glorot-uniform on `±gain·sqrt(6 / (fan_in +
/// fan_out))`. Stalk-mixing matrices start at the identity plus uniform
/// noise of half-width `stalk_noise`, so an untrained layer is close to pure
/// diffusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitScheme {
    pub gain: f64,
    pub stalk_noise: f64,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme {
            gain: 1.0,
            stalk_noise: 0.01,
        }
    }
}

impl InitScheme {
    pub fn feature_matrix(&self, rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Matrix {
        let s = self.gain * (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        Matrix::from_fn(fan_in, fan_out, |_, _| uniform(rng, s))
    }

    pub fn stalk_matrix(&self, rng: &mut impl Rng, k: usize) -> Matrix {
        let mut b = Matrix::identity(k);
        for x in b.as_mut_slice() {
            *x += uniform(rng, self.stalk_noise);
        }
        b
    }
}

fn uniform(rng: &mut impl Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..half_width)
    } else {
        0.0
    }
}
