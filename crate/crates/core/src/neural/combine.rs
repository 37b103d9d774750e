//! Several SheafConv branches evaluated in parallel on the same input and
//! merged before a single nonlinearity.

use super::activation::Activation;
use super::layers::SheafConvLayer;
use super::param::Param;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineMode {
    /// Stack branch outputs as extra feature columns.
    Concat,
    /// `Σ c_i · branch_i(X)` with learnable scalars `c_i`.
    LearnedSum,
}

#[derive(Clone, Debug)]
struct CombineCache {
    branch_out: Vec<Matrix>,
    pre: Matrix,
}

#[derive(Clone, Debug)]
pub struct CombinedLayer {
    branches: Vec<SheafConvLayer>,
    mode: CombineMode,
    /// `1 x m` mixing weights, only used by `LearnedSum`
    coeffs: Param,
    activation: Activation,
    cache: Option<CombineCache>,
}

impl CombinedLayer {
    /// Branch activations must be `Identity`; the nonlinearity is applied
    /// once, after combination. Learned-sum weights start at `1/m`.
    pub fn new(branches: Vec<SheafConvLayer>, mode: CombineMode, activation: Activation) -> Result<Self> {
        let Some(first) = branches.first() else {
            return Err(Error::InvalidConfig("no branches to combine".into()));
        };
        if let Some(b) = branches.iter().find(|b| b.activation() != Activation::Identity) {
            return Err(Error::InvalidConfig(format!(
                "combined branches must be linear, found {:?}",
                b.activation()
            )));
        }
        let rows = first.diffusion().shape().0;
        let fin = first.in_features();
        for b in &branches {
            if b.diffusion().shape().0 != rows || b.in_features() != fin {
                return Err(shape_err(
                    "CombinedLayer::new",
                    format!("{rows} rows and {fin} input features"),
                    format!("{} rows and {} input features", b.diffusion().shape().0, b.in_features()),
                ));
            }
            if mode == CombineMode::LearnedSum && b.out_features() != first.out_features() {
                return Err(shape_err(
                    "CombinedLayer::new",
                    format!("{} output features", first.out_features()),
                    b.out_features(),
                ));
            }
        }
        let m = branches.len();
        Ok(CombinedLayer {
            branches,
            mode,
            coeffs: Param::new(Matrix::from_vec(1, m, vec![1.0 / m as f64; m])?),
            activation,
            cache: None,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        self.coeffs.value.as_slice()
    }

    pub fn set_coeffs(&mut self, c: &[f64]) -> Result<()> {
        if c.len() != self.branches.len() {
            return Err(shape_err("CombinedLayer::set_coeffs", self.branches.len(), c.len()));
        }
        self.coeffs.value.as_mut_slice().copy_from_slice(c);
        Ok(())
    }

    pub fn branches(&self) -> &[SheafConvLayer] {
        &self.branches
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn preactivation(&self) -> Option<&Matrix> {
        self.cache.as_ref().map(|c| &c.pre)
    }

    pub fn mode(&self) -> CombineMode {
        self.mode
    }

    pub fn in_features(&self) -> usize {
        self.branches[0].in_features()
    }

    pub fn out_features(&self) -> usize {
        match self.mode {
            CombineMode::Concat => self.branches.iter().map(SheafConvLayer::out_features).sum(),
            CombineMode::LearnedSum => self.branches[0].out_features(),
        }
    }

    pub fn set_execution(&mut self, exec: crate::exec::Execution) {
        self.branches.iter_mut().for_each(|b| b.set_execution(exec));
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let outs = self
            .branches
            .iter_mut()
            .map(|b| b.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let pre = match self.mode {
            CombineMode::Concat => Matrix::hstack(&outs)?,
            CombineMode::LearnedSum => {
                let (r, c) = outs[0].shape();
                let mut acc = Matrix::zeros(r, c);
                for (o, &w) in outs.iter().zip(self.coeffs.value.as_slice()) {
                    acc.add_scaled(w, o)?;
                }
                acc
            }
        };
        let y = self.activation.apply(&pre);
        self.cache = Some(CombineCache { branch_out: outs, pre });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        let cache = self.cache.as_ref().ok_or(Error::MissingForwardCache)?;
        if dy.shape() != cache.pre.shape() {
            return Err(shape_err(
                "CombinedLayer::backward",
                format!("{:?}", cache.pre.shape()),
                format!("{:?}", dy.shape()),
            ));
        }
        let dpre = self.activation.backprop(&cache.pre, dy);
        let mut branch_grads = Vec::with_capacity(self.branches.len());
        match self.mode {
            CombineMode::Concat => {
                let mut offset = 0;
                for b in &self.branches {
                    branch_grads.push(dpre.column_slice(offset, b.out_features())?);
                    offset += b.out_features();
                }
            }
            CombineMode::LearnedSum => {
                for (i, out) in cache.branch_out.iter().enumerate() {
                    let g = dot(dpre.as_slice(), out.as_slice());
                    let gc = self.coeffs.grad.as_mut_slice();
                    gc[i] += g;
                    branch_grads.push(dpre.scale(self.coeffs.value.as_slice()[i]));
                }
            }
        }
        let mut dx: Option<Matrix> = None;
        for (b, g) in self.branches.iter_mut().zip(&branch_grads) {
            let d = b.backward(g)?;
            match &mut dx {
                Some(acc) => acc.add_scaled(1.0, &d)?,
                None => dx = Some(d),
            }
        }
        Ok(dx.expect("at least one branch"))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.branches.iter_mut().flat_map(|b| b.params_mut()).collect();
        if self.mode == CombineMode::LearnedSum {
            out.push(&mut self.coeffs);
        }
        out
    }
}
