//! Dense spectral tools for desk-scale operators: global sections, spectral
//! convolution and polynomial filters.

use nalgebra::{DMatrix, DVector};

use super::block::BlockSparseMatrix;
use super::cellular::{CellularSheaf, Cochain0};
use super::operators::coboundary;
use crate::eigen::symmetric_eigen;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, Matrix};

/// Default relative singular-value threshold for counting a direction as
/// annihilated by the coboundary.
pub const SECTION_TOL: f64 = 1e-12;

/// Orthonormal basis (as columns) of `H^0 = ker δ`.
///
/// Computed from the singular values of `δ` rather than the eigenvalues of
/// `L = δᵀδ`, which square small singular values below rounding noise.
/// Directions with `σ <= tol * σ_max` count as sections, so every returned
/// column satisfies `|δ s| <= tol * σ_max`. A sheaf with no edges has every
/// cochain as a section.
pub fn global_sections(sheaf: &CellularSheaf, tol: f64) -> Result<Matrix> {
    let d = coboundary(sheaf).to_dense();
    let n = d.cols();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    // zero rows up to a square matrix so the SVD returns a full right basis
    let mut padded = DMatrix::<f64>::zeros(d.rows().max(n), n);
    for i in 0..d.rows() {
        for (j, &x) in d.row(i).iter().enumerate() {
            padded[(i, j)] = x;
        }
    }
    let svd = padded
        .try_svd(false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigendecompositionFailure("SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    if sv.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigendecompositionFailure("non-finite singular value".into()));
    }
    let max = sv.iter().fold(0.0f64, |m, &x| m.max(x));
    let mut kernel: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= tol * max).collect();
    kernel.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    Ok(Matrix::from_fn(n, kernel.len(), |i, j| v_t[(kernel[j], i)]))
}

/// Orthogonal eigendecomposition `D = S Λ Sᵀ` of a symmetric operator.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    /// eigenvectors as columns, ordered like `eigenvalues`
    vectors: Matrix,
}

impl SpectralBasis {
    pub fn of(op: &BlockSparseMatrix) -> Result<Self> {
        if !op.is_square() {
            return Err(shape_err(
                "SpectralBasis::of",
                "square operator",
                format!("{:?}", op.shape()),
            ));
        }
        let dense = op.to_dense();
        let scale = dense.max_abs().max(1.0);
        if op.asymmetry() > 1e-10 * scale {
            return Err(Error::EigendecompositionFailure(
                "operator is not symmetric".into(),
            ));
        }
        let n = dense.rows();
        let (values, vecs) = symmetric_eigen(&dense.to_nalgebra())
            .ok_or_else(|| Error::EigendecompositionFailure("non-finite eigenvalue".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let vectors = Matrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
        Ok(SpectralBasis {
            eigenvalues,
            vectors,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(shape_err("SpectralBasis", self.dim(), x.len()));
        }
        Ok(())
    }

    /// Spectral coefficients `Sᵀx`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let n = self.dim();
        Ok((0..n)
            .map(|j| (0..n).map(|i| self.vectors.get(i, j) * x[i]).sum())
            .collect())
    }

    /// Signal with spectral coefficients `c`, i.e. `S c`.
    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c)?;
        Ok((0..self.dim()).map(|i| dot(self.vectors.row(i), c)).collect())
    }

    /// `x * y = S (Sᵀx ∘ Sᵀy)`.
    pub fn convolve(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let xs = self.forward(x)?;
        let ys = self.forward(y)?;
        let prod: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a * b).collect();
        self.inverse(&prod)
    }

    /// Monomial coefficients `a` of the degree `n - 1` polynomial with
    /// `p(λ_i) = (Sᵀy)_i`, so that `p(D) x = x * y` for every `x`.
    ///
    /// Requires pairwise distinct eigenvalues.
    pub fn fit_filter(&self, y: &[f64]) -> Result<Vec<f64>> {
        let response = self.forward(y)?;
        let n = self.dim();
        if n == 0 {
            return Ok(Vec::new());
        }
        let scale = self.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let min_gap = self
            .eigenvalues
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if min_gap <= 1e-12 * scale {
            return Err(Error::EigendecompositionFailure(
                "eigenvalues are not distinct; no interpolating filter".into(),
            ));
        }
        // Interpolate in λ / scale to keep the Vandermonde system well scaled.
        let mu: Vec<f64> = self.eigenvalues.iter().map(|l| l / scale).collect();
        let v = DMatrix::from_fn(n, n, |i, j| mu[i].powi(j as i32));
        let rhs = DVector::from_vec(response);
        let lu = v.clone().lu();
        let mut b = lu.solve(&rhs).ok_or_else(|| {
            Error::EigendecompositionFailure("singular Vandermonde system".into())
        })?;
        let residual = &rhs - &v * &b;
        if let Some(fix) = lu.solve(&residual) {
            b += fix;
        }
        Ok((0..n).map(|j| b[j] / scale.powi(j as i32)).collect())
    }
}

/// Convolution of two 0-cochains in the eigenbasis of a symmetric operator.
pub fn spectral_convolve(op: &BlockSparseMatrix, x: &Cochain0, y: &Cochain0) -> Result<Cochain0> {
    let basis = SpectralBasis::of(op)?;
    Ok(Cochain0::from_vec(basis.convolve(x.as_slice(), y.as_slice())?))
}

/// Coefficients of the polynomial filter in `op` that realizes convolution by `y`.
pub fn fit_polynomial_filter(op: &BlockSparseMatrix, y: &Cochain0) -> Result<Vec<f64>> {
    SpectralBasis::of(op)?.fit_filter(y.as_slice())
}

/// `a_0 I + a_1 D + ... + a_N D^N`, materialized densely and returned with
/// every block stored.
pub fn polynomial_filter(op: &BlockSparseMatrix, coeffs: &[f64]) -> Result<BlockSparseMatrix> {
    if !op.has_square_blocks() {
        return Err(shape_err(
            "polynomial_filter",
            "square block partition",
            format!("{:?}", op.shape()),
        ));
    }
    let d = op.to_dense();
    let n = d.rows();
    let mut p = Matrix::zeros(n, n);
    // Horner: p = (((a_N) D + a_{N-1}) D + ...) + a_0
    for &a in coeffs.iter().rev() {
        p = p.matmul(&d)?;
        for i in 0..n {
            p.set(i, i, p.get(i, i) + a);
        }
    }
    BlockSparseMatrix::from_dense(&p, op.row_sizes().to_vec(), op.col_sizes().to_vec())
}
