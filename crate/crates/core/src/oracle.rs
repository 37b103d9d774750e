//! Dense reference computations and random instance generators.
//!
//! Everything here works on fully materialized matrices through nalgebra, so
//! it shares no code path with the block-sparse kernels it is used to check.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigen::jacobi_eigen;
use crate::linalg::Matrix;
use crate::sheaf::{CellularSheaf, Edge, EdgeMaps, Graph};

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Uniformly random simple graph with exactly `m` edges.
pub(crate) fn random_graph(rng: &mut impl Rng, n: usize, m: usize) -> Graph {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .collect();
    let m = m.min(pairs.len());
    let mut chosen: Vec<usize> = sample(rng, pairs.len(), m).into_vec();
    chosen.sort_unstable();
    let edges = chosen
        .into_iter()
        .map(|i| Edge::weighted(pairs[i].0, pairs[i].1, rng.random_range(-2.0..2.0)))
        .collect();
    Graph::new(n, edges).expect("distinct pairs")
}

pub(crate) fn random_sheaf(rng: &mut impl Rng, n: usize, m: usize, k: usize, ke: usize) -> CellularSheaf {
    let g = random_graph(rng, n, m);
    let maps = (0..g.num_edges())
        .map(|_| EdgeMaps::new(uniform_matrix(rng, ke, k, 1.0), uniform_matrix(rng, ke, k, 1.0)))
        .collect();
    CellularSheaf::new(g, k, maps).expect("conforming maps")
}

/// δ written out entry by entry from `(δx)_e = F_head x_head - F_tail x_tail`.
pub(crate) fn dense_coboundary(s: &CellularSheaf) -> Matrix {
    let k = s.stalk_dim();
    let mut d = Matrix::zeros(s.edge_cochain_dim(), s.vertex_cochain_dim());
    for e in 0..s.graph().num_edges() {
        let (t, ft, h, fh) = s.oriented(e);
        let row0 = s.edge_offset(e);
        for i in 0..ft.rows() {
            for j in 0..k {
                d.set(row0 + i, h * k + j, d.get(row0 + i, h * k + j) + fh.get(i, j));
                d.set(row0 + i, t * k + j, d.get(row0 + i, t * k + j) - ft.get(i, j));
            }
        }
    }
    d
}

#[cfg(test)]
pub(crate) fn dense_product(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_nalgebra(&(a.to_nalgebra() * b.to_nalgebra()))
}

fn symmetric_part(m: &Matrix) -> DMatrix<f64> {
    let a = m.to_nalgebra();
    (&a + a.transpose()) * 0.5
}

/// Ascending eigenvalues of the symmetric part of `m`.
pub(crate) fn dense_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.rows() == 0 {
        return Vec::new();
    }
    let mut ev = jacobi_eigen(&symmetric_part(m)).0;
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest singular value.
#[cfg(test)]
pub(crate) fn dense_spectral_norm(m: &Matrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    m.to_nalgebra()
        .singular_values()
        .iter()
        .fold(0.0, |a: f64, &b| a.max(b))
}

/// Orthonormal basis of the numerical null space of any matrix: right
/// singular vectors with `σ <= rel_tol * σ_max`.
pub(crate) fn dense_null_space(m: &Matrix, rel_tol: f64) -> Matrix {
    let n = m.cols();
    let rows = m.rows().max(n);
    let a = DMatrix::from_fn(rows, n, |i, j| if i < m.rows() { m.get(i, j) } else { 0.0 });
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let max = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= rel_tol * max)
        .collect();
    Matrix::from_fn(n, cols.len(), |i, j| v_t[(cols[j], i)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_graph_has_requested_size() {
        let mut rng = seeded(1);
        let g = random_graph(&mut rng, 6, 9);
        assert_eq!(g.num_edges(), 9);
        let g = random_graph(&mut rng, 3, 10);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn null_space_of_path_laplacian() {
        let l = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let ns = dense_null_space(&l, 1e-8);
        assert_eq!(ns.cols(), 1);
        assert!((ns.get(0, 0).abs() - 0.5f64.sqrt()).abs() < 1e-12);
    }
}
