//! Dense symmetric eigensolvers.
//!
//! nalgebra's QR-based solver is fast but can return NaN on some reducible
//! inputs (e.g. a Laplacian whose only nonzeros sit in the first and last
//! rows). Those cases fall back to cyclic Jacobi rotations, which are slower
//! but unconditionally stable.

use nalgebra::{DMatrix, SymmetricEigen};

const JACOBI_SWEEPS: usize = 100;

/// Eigenvalues (unsorted) and eigenvectors (as columns) of the symmetric
/// part of `a`; `None` only if even the fallback produced non-finite output.
pub(crate) fn symmetric_eigen(a: &DMatrix<f64>) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let sym = (a + a.transpose()) * 0.5;
    if let Some(eig) = SymmetricEigen::try_new(sym.clone(), f64::EPSILON, 0) {
        let finite = eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).all(|x| x.is_finite());
        if finite {
            return Some((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors));
        }
    }
    let (values, vectors) = jacobi_eigen(&sym);
    values.iter().chain(vectors.iter()).all(|x| x.is_finite()).then_some((values, vectors))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub(crate) fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let norm = a.norm();
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-3 * f64::EPSILON * norm {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * x - s * y;
                    a[(k, q)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * x - s * y;
                    a[(q, k)] = s * x + c * y;
                }
                // exact zero by construction; rounding would leave ~eps here
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * x - s * y;
                    v[(k, q)] = s * x + c * y;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(a: &DMatrix<f64>, values: &[f64], vectors: &DMatrix<f64>) {
        let n = a.nrows();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values));
        assert!((a * vectors - vectors * lambda).norm() < 1e-12 * a.norm().max(1.0));
        assert!((vectors.transpose() * vectors - DMatrix::identity(n, n)).norm() < 1e-12);
    }

    #[test]
    fn jacobi_diagonalizes_a_dense_matrix() {
        let a = DMatrix::from_fn(6, 6, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let (values, vectors) = jacobi_eigen(&a);
        check(&a, &values, &vectors);
    }

    #[test]
    fn reducible_corner_block_is_solved() {
        // nonzeros only in rows/cols {0, 1, n-2, n-1}
        let n = 24;
        let idx = [0, 1, n - 2, n - 1];
        let block = [
            [0.29508774251346376, -0.37589257924305364, -0.5615539831577245, 0.052889769064827896],
            [-0.37589257924305364, 0.5247946944001116, 0.6371045516001574, -0.23872739947904376],
            [-0.5615539831577245, 0.6371045516001574, 1.2017406030930582, 0.19092244584528734],
            [0.052889769064827896, -0.23872739947904376, 0.19092244584528734, 0.6482064696155092],
        ];
        let mut a = DMatrix::zeros(n, n);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                a[(i, j)] = block[r][c];
            }
        }
        let (values, vectors) = symmetric_eigen(&a).unwrap();
        check(&a, &values, &vectors);
    }
}
