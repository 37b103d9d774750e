//! SheafConv and GCN layers with explicit reverse-mode gradients.

use std::sync::Arc;

use rand::Rng;

use super::activation::Activation;
use super::param::{InitScheme, Param};
use crate::error::{shape_err, Error, Result};
use crate::exec::{for_each_row, Execution};
use crate::linalg::{axpy, Matrix};
use crate::sheaf::BlockSparseMatrix;

/// `(I ⊗ B) X`: multiplies the `k x k` matrix `b` onto every node's block of
/// `k` consecutive rows.
pub fn kron_apply(b: &Matrix, x: &Matrix, exec: Execution) -> Result<Matrix> {
    let k = b.rows();
    if b.cols() != k || k == 0 || !x.rows().is_multiple_of(k) {
        return Err(shape_err(
            "kron_apply",
            format!("square B and rows divisible by {}", b.rows()),
            format!("B {:?}, X {:?}", b.shape(), x.shape()),
        ));
    }
    let width = x.cols();
    let mut out = Matrix::zeros(x.rows(), width);
    for_each_row(exec, out.as_mut_slice(), width, |r, dst| {
        let (node, i) = (r / k, r % k);
        for (j, &bij) in b.row(i).iter().enumerate() {
            axpy(bij, x.row(node * k + j), dst);
        }
    });
    Ok(out)
}

/// `(I ⊗ Bᵀ) X`.
pub fn kron_apply_t(b: &Matrix, x: &Matrix, exec: Execution) -> Result<Matrix> {
    kron_apply(&b.transpose(), x, exec)
}

/// `Σ_v dV_v U_vᵀ` over node blocks: the gradient of `(I ⊗ B) U` with respect
/// to `B`.
fn kron_grad(dv: &Matrix, u: &Matrix, k: usize) -> Matrix {
    let mut g = Matrix::zeros(k, k);
    let nodes = u.rows() / k;
    for i in 0..k {
        for j in 0..k {
            let mut acc = 0.0;
            for v in 0..nodes {
                let a = dv.row(v * k + i);
                let b = u.row(v * k + j);
                acc += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            }
            g.set(i, j, acc);
        }
    }
    g
}

#[derive(Clone, Debug)]
struct ConvCache {
    x: Matrix,
    u: Matrix,
    pre: Matrix,
}

/// Shared core of both layer types: `ρ(D (I ⊗ B) X A)` with `B` optional.
#[derive(Clone, Debug)]
struct Conv {
    weight: Param,
    stalk: Option<Param>,
    operator: Arc<BlockSparseMatrix>,
    activation: Activation,
    exec: Execution,
    cache: Option<ConvCache>,
}

impl Conv {
    fn stalk_dim(&self) -> usize {
        self.stalk.as_ref().map_or(1, |b| b.value.rows())
    }

    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let n = self.operator.shape().1;
        if x.rows() != n || x.cols() != self.weight.value.rows() {
            return Err(shape_err(
                "layer forward",
                format!("{}x{}", n, self.weight.value.rows()),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        // D (I⊗B) X A = D ((I⊗B)(X A)) since B acts on rows and A on columns.
        let u = x.matmul_with(&self.weight.value, self.exec)?;
        let pre = match &self.stalk {
            Some(b) => self.operator.apply_with(&kron_apply(&b.value, &u, self.exec)?, self.exec)?,
            None => self.operator.apply_with(&u, self.exec)?,
        };
        let y = self.activation.apply(&pre);
        self.cache = Some(ConvCache {
            x: x.clone(),
            u,
            pre,
        });
        Ok(y)
    }

    fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        let cache = self.cache.as_ref().ok_or(Error::MissingForwardCache)?;
        if dy.shape() != cache.pre.shape() {
            return Err(shape_err(
                "layer backward",
                format!("{:?}", cache.pre.shape()),
                format!("{:?}", dy.shape()),
            ));
        }
        let dpre = self.activation.backprop(&cache.pre, dy);
        // D is symmetric, so Dᵀ dP = D dP.
        let dv = self.operator.apply_with(&dpre, self.exec)?;
        let du = match &mut self.stalk {
            Some(b) => {
                let k = b.value.rows();
                let gb = kron_grad(&dv, &cache.u, k);
                b.grad.add_scaled(1.0, &gb)?;
                kron_apply_t(&b.value, &dv, self.exec)?
            }
            None => dv,
        };
        let ga = cache.x.t_matmul_with(&du, self.exec)?;
        self.weight.grad.add_scaled(1.0, &ga)?;
        du.matmul_t_with(&self.weight.value, self.exec)
    }
}

/// `SheafConv(A, B)(X) = ρ(D (I ⊗ B) X A)`.
///
/// `A` mixes features, `B` mixes stalk coordinates within every node block.
/// With `k = 1`, `B` is a learnable scalar that duplicates a rescaling of `A`;
/// it is kept so the layer matches the general formula exactly.
#[derive(Clone, Debug)]
pub struct SheafConvLayer {
    conv: Conv,
}

impl SheafConvLayer {
    pub fn new(
        a: Matrix,
        b: Matrix,
        diffusion: Arc<BlockSparseMatrix>,
        activation: Activation,
    ) -> Result<Self> {
        let k = b.rows();
        if b.cols() != k || k == 0 {
            return Err(shape_err("SheafConvLayer::new", "square non-empty B", format!("{:?}", b.shape())));
        }
        if !diffusion.is_square() || !diffusion.shape().0.is_multiple_of(k) {
            return Err(shape_err(
                "SheafConvLayer::new",
                format!("square operator with dimension divisible by {k}"),
                format!("{:?}", diffusion.shape()),
            ));
        }
        Ok(SheafConvLayer {
            conv: Conv {
                weight: Param::new(a),
                stalk: Some(Param::new(b)),
                operator: diffusion,
                activation,
                exec: Execution::default(),
                cache: None,
            },
        })
    }

    pub fn init(
        rng: &mut impl Rng,
        scheme: &InitScheme,
        diffusion: Arc<BlockSparseMatrix>,
        k: usize,
        in_features: usize,
        out_features: usize,
        activation: Activation,
    ) -> Result<Self> {
        let a = scheme.feature_matrix(rng, in_features, out_features);
        let b = scheme.stalk_matrix(rng, k);
        SheafConvLayer::new(a, b, diffusion, activation)
    }

    pub fn a(&self) -> &Matrix {
        &self.conv.weight.value
    }

    pub fn b(&self) -> &Matrix {
        &self.conv.stalk.as_ref().expect("sheaf layers carry B").value
    }

    pub fn grad_a(&self) -> &Matrix {
        &self.conv.weight.grad
    }

    pub fn grad_b(&self) -> &Matrix {
        &self.conv.stalk.as_ref().expect("sheaf layers carry B").grad
    }

    pub fn stalk_dim(&self) -> usize {
        self.conv.stalk_dim()
    }

    pub fn activation(&self) -> Activation {
        self.conv.activation
    }

    pub fn diffusion(&self) -> &Arc<BlockSparseMatrix> {
        &self.conv.operator
    }

    pub fn in_features(&self) -> usize {
        self.conv.weight.value.rows()
    }

    pub fn out_features(&self) -> usize {
        self.conv.weight.value.cols()
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.conv.exec = exec;
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        self.conv.forward(x)
    }

    /// Returns `dL/dX` and accumulates `dL/dA`, `dL/dB`.
    pub fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        self.conv.backward(dy)
    }

    pub fn preactivation(&self) -> Option<&Matrix> {
        self.conv.cache.as_ref().map(|c| &c.pre)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let Conv { weight, stalk, .. } = &mut self.conv;
        let mut out = vec![weight];
        if let Some(b) = stalk {
            out.push(b);
        }
        out
    }
}

/// Graph convolution `ρ(Â X W)` with a fixed propagation operator.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    conv: Conv,
}

impl GcnLayer {
    pub fn new(w: Matrix, propagation: Arc<BlockSparseMatrix>, activation: Activation) -> Result<Self> {
        if !propagation.is_square() {
            return Err(shape_err(
                "GcnLayer::new",
                "square operator",
                format!("{:?}", propagation.shape()),
            ));
        }
        Ok(GcnLayer {
            conv: Conv {
                weight: Param::new(w),
                stalk: None,
                operator: propagation,
                activation,
                exec: Execution::default(),
                cache: None,
            },
        })
    }

    pub fn init(
        rng: &mut impl Rng,
        scheme: &InitScheme,
        propagation: Arc<BlockSparseMatrix>,
        in_features: usize,
        out_features: usize,
        activation: Activation,
    ) -> Result<Self> {
        GcnLayer::new(scheme.feature_matrix(rng, in_features, out_features), propagation, activation)
    }

    pub fn w(&self) -> &Matrix {
        &self.conv.weight.value
    }

    pub fn grad_w(&self) -> &Matrix {
        &self.conv.weight.grad
    }

    pub fn activation(&self) -> Activation {
        self.conv.activation
    }

    pub fn propagation(&self) -> &Arc<BlockSparseMatrix> {
        &self.conv.operator
    }

    pub fn in_features(&self) -> usize {
        self.conv.weight.value.rows()
    }

    pub fn out_features(&self) -> usize {
        self.conv.weight.value.cols()
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.conv.exec = exec;
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        self.conv.forward(x)
    }

    pub fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        self.conv.backward(dy)
    }

    pub fn preactivation(&self) -> Option<&Matrix> {
        self.conv.cache.as_ref().map(|c| &c.pre)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.conv.weight]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dense_product, seeded, uniform_matrix};

    /// `I_n ⊗ B` written out in full.
    fn dense_kron(b: &Matrix, nodes: usize) -> Matrix {
        let k = b.rows();
        Matrix::from_fn(nodes * k, nodes * k, |r, c| {
            if r / k == c / k {
                b.get(r % k, c % k)
            } else {
                0.0
            }
        })
    }

    fn random_operator(rng: &mut impl Rng, n: usize, k: usize) -> Arc<BlockSparseMatrix> {
        let a = uniform_matrix(rng, n * k, n * k, 1.0);
        let s = Matrix::from_fn(n * k, n * k, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
        Arc::new(BlockSparseMatrix::from_dense(&s, vec![k; n], vec![k; n]).unwrap())
    }

    #[test]
    fn kron_matches_dense_kronecker() {
        let mut rng = seeded(21);
        for k in 1..=3 {
            let b = uniform_matrix(&mut rng, k, k, 1.0);
            let x = uniform_matrix(&mut rng, 5 * k, 4, 1.0);
            let blockwise = kron_apply(&b, &x, Execution::Sequential).unwrap();
            let dense = dense_product(&dense_kron(&b, 5), &x);
            assert!(blockwise.max_abs_diff(&dense) < 1e-12);
        }
        let b = Matrix::identity(2);
        assert!(kron_apply(&b, &Matrix::zeros(3, 1), Execution::Sequential).is_err());
    }

    #[test]
    fn all_identity_layer_is_identity() {
        let x = Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 5.0);
        let id = Arc::new(BlockSparseMatrix::identity(vec![1; 4]));
        let mut layer = SheafConvLayer::new(Matrix::identity(3), Matrix::identity(1), id.clone(), Activation::Identity).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
        let dy = x.scale(0.5);
        assert_eq!(layer.backward(&dy).unwrap(), dy);
        let mut gcn = GcnLayer::new(Matrix::identity(3), id, Activation::Identity).unwrap();
        assert_eq!(gcn.forward(&x).unwrap(), x);
    }

    #[test]
    fn layer_output_matches_dense_formula() {
        let mut rng = seeded(22);
        let (n, k) = (4, 2);
        let d = random_operator(&mut rng, n, k);
        let a = uniform_matrix(&mut rng, 3, 2, 1.0);
        let b = uniform_matrix(&mut rng, k, k, 1.0);
        let x = uniform_matrix(&mut rng, n * k, 3, 1.0);
        let mut layer = SheafConvLayer::new(a.clone(), b.clone(), d.clone(), Activation::Relu).unwrap();
        let y = layer.forward(&x).unwrap();
        let dense = dense_product(
            &dense_product(&dense_product(&d.to_dense(), &dense_kron(&b, n)), &x),
            &a,
        )
        .map(|v| v.max(0.0));
        assert!(y.max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = seeded(23);
        let d = random_operator(&mut rng, 3, 2);
        let mut layer = SheafConvLayer::init(&mut rng, &InitScheme::default(), d, 2, 3, 2, Activation::Relu).unwrap();
        let x = uniform_matrix(&mut rng, 6, 3, 1.0);
        layer.forward(&x).unwrap();
        let dx = layer.backward(&Matrix::zeros(6, 2)).unwrap();
        assert_eq!(dx, Matrix::zeros(6, 3));
        assert_eq!(layer.grad_a(), &Matrix::zeros(3, 2));
        assert_eq!(layer.grad_b(), &Matrix::zeros(2, 2));
    }

    #[test]
    fn backward_requires_forward() {
        let id = Arc::new(BlockSparseMatrix::identity(vec![1; 2]));
        let mut layer = GcnLayer::new(Matrix::identity(1), id, Activation::Relu).unwrap();
        assert!(matches!(layer.backward(&Matrix::zeros(2, 1)), Err(Error::MissingForwardCache)));
        assert!(layer.forward(&Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn gcn_equals_scalar_sheafconv() {
        let mut rng = seeded(24);
        let d = random_operator(&mut rng, 7, 1);
        let w = uniform_matrix(&mut rng, 4, 3, 1.0);
        let x = uniform_matrix(&mut rng, 7, 4, 1.0);
        let dy = uniform_matrix(&mut rng, 7, 3, 1.0);
        let mut gcn = GcnLayer::new(w.clone(), d.clone(), Activation::Relu).unwrap();
        let mut sheaf = SheafConvLayer::new(w, Matrix::identity(1), d, Activation::Relu).unwrap();
        let y1 = gcn.forward(&x).unwrap();
        let y2 = sheaf.forward(&x).unwrap();
        assert!(y1.max_abs_diff(&y2) <= 1e-14);
        let dx1 = gcn.backward(&dy).unwrap();
        let dx2 = sheaf.backward(&dy).unwrap();
        assert!(dx1.max_abs_diff(&dx2) <= 1e-14);
        assert!(gcn.grad_w().max_abs_diff(sheaf.grad_a()) <= 1e-14);
    }
}
