//! Coboundary, Laplacians and diffusion operators of a cellular sheaf.

use nalgebra::DMatrix;

use super::block::{BlockSparseBuilder, BlockSparseMatrix};
use super::cellular::CellularSheaf;
use crate::eigen::symmetric_eigen;
use crate::error::{shape_err, Error, Result};
use crate::exec::Execution;
use crate::linalg::Matrix;

/// Relative eigenvalue floor below which a diagonal block counts as singular.
pub const SINGULAR_BLOCK_TOL: f64 = 1e-12;

/// The coboundary `δ: C^0 -> C^1`, `(δx)_e = F_{v⊴e} x_v - F_{u⊴e} x_u` for
/// the oriented edge `u -> v`.
pub fn coboundary(sheaf: &CellularSheaf) -> BlockSparseMatrix {
    let k = sheaf.stalk_dim();
    let mut b = BlockSparseBuilder::new(sheaf.edge_dims(), vec![k; sheaf.num_nodes()]);
    for e in 0..sheaf.graph().num_edges() {
        let (tail, f_tail, head, f_head) = sheaf.oriented(e);
        b.add_scaled(e, tail, -1.0, f_tail).expect("validated shapes");
        b.add(e, head, f_head).expect("validated shapes");
    }
    b.build()
}

/// The sheaf Laplacian `L = δᵀδ`, assembled blockwise from the restriction maps.
///
/// Diagonal blocks are stored for every node, including isolated ones.
pub fn sheaf_laplacian(sheaf: &CellularSheaf) -> BlockSparseMatrix {
    let k = sheaf.stalk_dim();
    let n = sheaf.num_nodes();
    let mut b = BlockSparseBuilder::square(vec![k; n]);
    for v in 0..n {
        b.add(v, v, &Matrix::zeros(k, k)).expect("k x k");
    }
    for (e, maps) in sheaf.maps().iter().enumerate() {
        let edge = sheaf.graph().edges()[e];
        let (fu, fv) = (&maps.tail, &maps.head);
        let uu = fu.t_matmul_with(fu, Execution::Sequential).expect("shapes");
        let vv = fv.t_matmul_with(fv, Execution::Sequential).expect("shapes");
        let uv = fu.t_matmul_with(fv, Execution::Sequential).expect("shapes");
        b.add(edge.u, edge.u, &uu).expect("k x k");
        b.add(edge.v, edge.v, &vv).expect("k x k");
        b.add_scaled(edge.u, edge.v, -1.0, &uv).expect("k x k");
        b.add_scaled(edge.v, edge.u, -1.0, &uv.transpose()).expect("k x k");
    }
    b.build()
}

fn check_uniform(l: &BlockSparseMatrix, k: usize, op: &'static str) -> Result<()> {
    if !l.has_square_blocks() || l.row_sizes().iter().any(|&s| s != k) {
        return Err(shape_err(
            op,
            format!("square operator with {k}x{k} blocks"),
            format!("row blocks {:?}", l.row_sizes()),
        ));
    }
    Ok(())
}

/// Symmetric inverse square root of a positive definite block.
fn inv_sqrt_block(block: &Matrix, node: usize) -> Result<Matrix> {
    let k = block.rows();
    if k == 1 {
        let d = block.get(0, 0);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SingularBlock { node });
        }
        return Ok(Matrix::from_vec(1, 1, vec![1.0 / d.sqrt()]).expect("1x1"));
    }
    let (values, q) = symmetric_eigen(&block.to_nalgebra()).ok_or(Error::SingularBlock { node })?;
    let max = values.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let min = values.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    if !(max > 0.0) || min <= SINGULAR_BLOCK_TOL * max {
        return Err(Error::SingularBlock { node });
    }
    Ok(Matrix::from_fn(k, k, |i, j| {
        (0..k).map(|t| q[(i, t)] * q[(j, t)] / values[t].sqrt()).sum()
    }))
}

/// `D_v^{-1/2}` from the restriction maps stacked at `v`: with
/// `M = U Σ Vᵀ` and `D_v = MᵀM`, this is `V Σ⁻¹ Vᵀ`.
fn inv_sqrt_from_maps(maps: &[&Matrix], k: usize, node: usize) -> Result<Matrix> {
    let rows: usize = maps.iter().map(|m| m.rows()).sum();
    let mut m = DMatrix::<f64>::zeros(rows.max(k), k);
    let mut r = 0;
    for f in maps {
        for i in 0..f.rows() {
            for (j, &x) in f.row(i).iter().enumerate() {
                m[(r, j)] = x;
            }
            r += 1;
        }
    }
    let svd = m
        .try_svd(false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigendecompositionFailure("SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    let max = sv.iter().fold(0.0f64, |a, &x| a.max(x));
    let min = sv.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    if !(max > 0.0) || !max.is_finite() || min <= SINGULAR_BLOCK_TOL.sqrt() * max {
        return Err(Error::SingularBlock { node });
    }
    Ok(Matrix::from_fn(k, k, |i, j| {
        (0..k).map(|t| v_t[(t, i)] * v_t[(t, j)] / sv[t]).sum()
    }))
}

/// The normalized Laplacian assembled straight from the restriction maps.
///
/// Equal to `normalized_laplacian(&sheaf_laplacian(sheaf), k)` in exact
/// arithmetic, but `D_v^{-1/2}` is taken from the singular values of the
/// maps rather than the eigenvalues of `D_v = Σ FᵀF`. Rounding error then
/// grows with the square root of each block's condition number instead of
/// linearly, which matters once blocks are nearly singular.
pub fn sheaf_normalized_laplacian(sheaf: &CellularSheaf) -> Result<BlockSparseMatrix> {
    let k = sheaf.stalk_dim();
    let n = sheaf.num_nodes();
    let edges = sheaf.graph().edges();
    let mut incident: Vec<Vec<&Matrix>> = vec![Vec::new(); n];
    for (e, maps) in sheaf.maps().iter().enumerate() {
        incident[edges[e].u].push(&maps.tail);
        incident[edges[e].v].push(&maps.head);
    }
    let scales = incident
        .iter()
        .enumerate()
        .map(|(v, maps)| inv_sqrt_from_maps(maps, k, v))
        .collect::<Result<Vec<_>>>()?;
    let mut b = BlockSparseBuilder::square(vec![k; n]);
    for (e, maps) in sheaf.maps().iter().enumerate() {
        let (u, v) = (edges[e].u, edges[e].v);
        let gu = maps.tail.matmul_with(&scales[u], Execution::Sequential)?;
        let gv = maps.head.matmul_with(&scales[v], Execution::Sequential)?;
        let uv = gu.t_matmul_with(&gv, Execution::Sequential)?;
        b.add(u, u, &gu.t_matmul_with(&gu, Execution::Sequential)?)?;
        b.add(v, v, &gv.t_matmul_with(&gv, Execution::Sequential)?)?;
        b.add_scaled(u, v, -1.0, &uv)?;
        b.add_scaled(v, u, -1.0, &uv.transpose())?;
    }
    Ok(b.build())
}

/// `D^{-1/2} L D^{-1/2}` where `D` is the block diagonal of `L`.
///
/// Fails with [`Error::SingularBlock`] when any node's diagonal block is
/// singular, which includes every isolated node.
pub fn normalized_laplacian(l: &BlockSparseMatrix, k: usize) -> Result<BlockSparseMatrix> {
    check_uniform(l, k, "normalized_laplacian")?;
    let n = l.num_block_rows();
    let mut scales = Vec::with_capacity(n);
    for v in 0..n {
        let block = l
            .block(v, v)
            .map(|b| b.to_matrix())
            .unwrap_or_else(|| Matrix::zeros(k, k));
        scales.push(inv_sqrt_block(&block, v)?);
    }
    if k == 1 {
        let s: Vec<f64> = scales.iter().map(|m| m.get(0, 0)).collect();
        return l.map_blocks(|r, c, b| b.scale(s[r] * s[c]));
    }
    l.map_blocks(|r, c, b| {
        scales[r]
            .matmul_with(b, Execution::Sequential)
            .and_then(|t| t.matmul_with(&scales[c], Execution::Sequential))
            .expect("k x k blocks")
    })
}

/// `H = I - αL`. Sections of the sheaf are fixed points of `H`.
pub fn diffusion_alpha(l: &BlockSparseMatrix, alpha: f64) -> Result<BlockSparseMatrix> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "diffusion step must be finite and non-negative, got {alpha}"
        )));
    }
    l.identity_plus_scaled(-alpha)
}

/// `H̃ = I - L̃` for a normalized Laplacian.
pub fn diffusion_normalized(l_tilde: &BlockSparseMatrix) -> Result<BlockSparseMatrix> {
    l_tilde.identity_plus_scaled(-1.0)
}

/// Applies `op` to `x`.
pub fn apply(op: &BlockSparseMatrix, x: &Matrix) -> Result<Matrix> {
    op.apply(x)
}

/// Applies `op` to `x` `r` times; `r = 0` returns `x` unchanged.
pub fn apply_power(op: &BlockSparseMatrix, x: &Matrix, r: usize) -> Result<Matrix> {
    if !op.is_square() {
        return Err(shape_err(
            "apply_power",
            "square operator",
            format!("{:?}", op.shape()),
        ));
    }
    if x.rows() != op.shape().1 {
        return Err(shape_err("apply_power", op.shape().1, x.rows()));
    }
    let mut out = x.clone();
    for _ in 0..r {
        out = op.apply(&out)?;
    }
    Ok(out)
}
