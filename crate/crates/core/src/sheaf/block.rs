//! Block-structured sparse operators.
//!
//! Blocks are collected as coordinate triplets by [`BlockSparseBuilder`] and
//! frozen into a block-compressed-row layout. Once frozen a matrix is
//! immutable and can be shared across threads.

use crate::error::{shape_err, Result};
use crate::exec::{for_each_row, Execution};
use crate::linalg::{axpy, Matrix};

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    out.push(0);
    for s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

/// Accumulates dense blocks at (block-row, block-col) coordinates.
///
/// Adding to the same coordinate twice sums the blocks.
#[derive(Clone, Debug)]
pub struct BlockSparseBuilder {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    entries: Vec<(usize, usize, usize)>,
    data: Vec<f64>,
}

impl BlockSparseBuilder {
    pub fn new(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Self {
        BlockSparseBuilder {
            row_sizes,
            col_sizes,
            entries: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn square(sizes: Vec<usize>) -> Self {
        Self::new(sizes.clone(), sizes)
    }

    /// Adds `scale * block` at `(r, c)`; `block` is row-major.
    pub fn add_scaled_slice(&mut self, r: usize, c: usize, scale: f64, block: &[f64]) -> Result<()> {
        let (Some(&m), Some(&n)) = (self.row_sizes.get(r), self.col_sizes.get(c)) else {
            return Err(shape_err(
                "BlockSparseBuilder::add",
                format!(
                    "block index within {}x{}",
                    self.row_sizes.len(),
                    self.col_sizes.len()
                ),
                format!("({r}, {c})"),
            ));
        };
        if block.len() != m * n {
            return Err(shape_err(
                "BlockSparseBuilder::add",
                format!("{m}x{n} block"),
                format!("{} values", block.len()),
            ));
        }
        self.entries.push((r, c, self.data.len()));
        self.data.extend(block.iter().map(|x| scale * x));
        Ok(())
    }

    pub fn add(&mut self, r: usize, c: usize, block: &Matrix) -> Result<()> {
        let expected = (self.row_sizes.get(r).copied(), self.col_sizes.get(c).copied());
        if expected != (Some(block.rows()), Some(block.cols())) {
            return Err(shape_err(
                "BlockSparseBuilder::add",
                format!("{expected:?} at ({r}, {c})"),
                format!("{:?}", block.shape()),
            ));
        }
        self.add_scaled_slice(r, c, 1.0, block.as_slice())
    }

    pub fn add_scaled(&mut self, r: usize, c: usize, scale: f64, block: &Matrix) -> Result<()> {
        self.add(r, c, &block.scale(scale))
    }

    pub fn build(mut self) -> BlockSparseMatrix {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let row_offsets = offsets(&self.row_sizes);
        let col_offsets = offsets(&self.col_sizes);
        let mut row_ptr = vec![0usize; self.row_sizes.len() + 1];
        let mut block_col = Vec::new();
        let mut block_start = Vec::new();
        let mut data = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, off) in &self.entries {
            let len = self.row_sizes[r] * self.col_sizes[c];
            let src = &self.data[off..off + len];
            if last == Some((r, c)) {
                let start = *block_start.last().expect("previous block");
                for (d, s) in data[start..start + len].iter_mut().zip(src) {
                    *d += s;
                }
            } else {
                row_ptr[r + 1] += 1;
                block_col.push(c);
                block_start.push(data.len());
                data.extend_from_slice(src);
                last = Some((r, c));
            }
        }
        for r in 0..self.row_sizes.len() {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut row_block = Vec::with_capacity(*row_offsets.last().unwrap_or(&0));
        for (r, &m) in self.row_sizes.iter().enumerate() {
            row_block.extend(std::iter::repeat_n(r, m));
        }
        BlockSparseMatrix {
            row_sizes: self.row_sizes,
            col_sizes: self.col_sizes,
            row_offsets,
            col_offsets,
            row_ptr,
            block_col,
            block_start,
            data,
            row_block,
        }
    }
}

/// Immutable block-compressed-row sparse matrix.
///
/// Absent blocks are zero. Row and column partitions are fixed at build
/// time.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSparseMatrix {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    row_ptr: Vec<usize>,
    block_col: Vec<usize>,
    block_start: Vec<usize>,
    data: Vec<f64>,
    /// block row owning each scalar row
    row_block: Vec<usize>,
}

/// Borrowed view of one stored block.
#[derive(Clone, Copy, Debug)]
pub struct BlockRef<'a> {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: &'a [f64],
}

impl BlockRef<'_> {
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.values.to_vec()).expect("block shape")
    }
}

impl BlockSparseMatrix {
    pub fn zeros(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Self {
        BlockSparseBuilder::new(row_sizes, col_sizes).build()
    }

    pub fn identity(sizes: Vec<usize>) -> Self {
        let mut b = BlockSparseBuilder::square(sizes.clone());
        for (i, &s) in sizes.iter().enumerate() {
            b.add(i, i, &Matrix::identity(s)).expect("identity block conforms");
        }
        b.build()
    }

    /// Splits a dense matrix into blocks, storing every block.
    pub fn from_dense(m: &Matrix, row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Result<Self> {
        let rows: usize = row_sizes.iter().sum();
        let cols: usize = col_sizes.iter().sum();
        if m.shape() != (rows, cols) {
            return Err(shape_err(
                "BlockSparseMatrix::from_dense",
                format!("{:?}", (rows, cols)),
                format!("{:?}", m.shape()),
            ));
        }
        let ro = offsets(&row_sizes);
        let co = offsets(&col_sizes);
        let mut b = BlockSparseBuilder::new(row_sizes.clone(), col_sizes.clone());
        for (r, &rs) in row_sizes.iter().enumerate() {
            for (c, &cs) in col_sizes.iter().enumerate() {
                let block = Matrix::from_fn(rs, cs, |i, j| m.get(ro[r] + i, co[c] + j));
                b.add(r, c, &block)?;
            }
        }
        Ok(b.build())
    }

    pub fn shape(&self) -> (usize, usize) {
        (
            *self.row_offsets.last().unwrap_or(&0),
            *self.col_offsets.last().unwrap_or(&0),
        )
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.row_sizes
    }

    pub fn col_sizes(&self) -> &[usize] {
        &self.col_sizes
    }

    pub fn row_offset(&self, r: usize) -> usize {
        self.row_offsets[r]
    }

    pub fn col_offset(&self, c: usize) -> usize {
        self.col_offsets[c]
    }

    pub fn num_block_rows(&self) -> usize {
        self.row_sizes.len()
    }

    pub fn num_block_cols(&self) -> usize {
        self.col_sizes.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.block_col.len()
    }

    pub fn is_square(&self) -> bool {
        let (m, n) = self.shape();
        m == n
    }

    /// Square with identical row and column partitions.
    pub fn has_square_blocks(&self) -> bool {
        self.row_sizes == self.col_sizes
    }

    fn block_ref(&self, idx: usize, row: usize) -> BlockRef<'_> {
        let col = self.block_col[idx];
        let rows = self.row_sizes[row];
        let cols = self.col_sizes[col];
        let start = self.block_start[idx];
        BlockRef {
            row,
            col,
            rows,
            cols,
            values: &self.data[start..start + rows * cols],
        }
    }

    /// Stored blocks of block row `r`, in increasing column order.
    pub fn row_blocks(&self, r: usize) -> impl Iterator<Item = BlockRef<'_>> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |idx| self.block_ref(idx, r))
    }

    pub fn blocks(&self) -> impl Iterator<Item = BlockRef<'_>> + '_ {
        (0..self.num_block_rows()).flat_map(move |r| self.row_blocks(r))
    }

    pub fn block(&self, r: usize, c: usize) -> Option<BlockRef<'_>> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        let cols = &self.block_col[range.clone()];
        cols.binary_search(&c)
            .ok()
            .map(|pos| self.block_ref(range.start + pos, r))
    }

    pub fn to_dense(&self) -> Matrix {
        let (m, n) = self.shape();
        let mut out = Matrix::zeros(m, n);
        for b in self.blocks() {
            let r0 = self.row_offsets[b.row];
            let c0 = self.col_offsets[b.col];
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out.set(r0 + i, c0 + j, b.values[i * b.cols + j]);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> BlockSparseMatrix {
        let mut b = BlockSparseBuilder::new(self.col_sizes.clone(), self.row_sizes.clone());
        for blk in self.blocks() {
            let t = blk.to_matrix().transpose();
            b.add(blk.col, blk.row, &t).expect("transposed block conforms");
        }
        b.build()
    }

    /// Largest entrywise asymmetry `|A - Aᵀ|`; infinite when not square-blocked.
    pub fn asymmetry(&self) -> f64 {
        if !self.has_square_blocks() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for b in self.blocks() {
            let Some(t) = self.block(b.col, b.row) else {
                worst = worst.max(b.values.iter().fold(0.0, |m, x| m.max(x.abs())));
                continue;
            };
            for i in 0..b.rows {
                for j in 0..b.cols {
                    worst = worst.max((b.values[i * b.cols + j] - t.values[j * t.cols + i]).abs());
                }
            }
        }
        worst
    }

    /// Rebuilds the matrix with every block passed through `f(row, col, block)`.
    pub fn map_blocks(&self, mut f: impl FnMut(usize, usize, &Matrix) -> Matrix) -> Result<Self> {
        let mut b = BlockSparseBuilder::new(self.row_sizes.clone(), self.col_sizes.clone());
        for blk in self.blocks() {
            let mapped = f(blk.row, blk.col, &blk.to_matrix());
            b.add(blk.row, blk.col, &mapped)?;
        }
        Ok(b.build())
    }

    /// `I + scale * self` for a square-blocked matrix.
    pub fn identity_plus_scaled(&self, scale: f64) -> Result<Self> {
        if !self.has_square_blocks() {
            return Err(shape_err(
                "BlockSparseMatrix::identity_plus_scaled",
                "square block partition",
                format!("{:?} rows vs {:?} cols", self.row_sizes, self.col_sizes),
            ));
        }
        let mut b = BlockSparseBuilder::square(self.row_sizes.clone());
        for (i, &s) in self.row_sizes.iter().enumerate() {
            b.add(i, i, &Matrix::identity(s))?;
        }
        for blk in self.blocks() {
            b.add_scaled_slice(blk.row, blk.col, scale, blk.values)?;
        }
        Ok(b.build())
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.apply_with(x, Execution::default())
    }

    /// Sparse product `self * x`.
    pub fn apply_with(&self, x: &Matrix, exec: Execution) -> Result<Matrix> {
        let (m, n) = self.shape();
        if x.rows() != n {
            return Err(shape_err(
                "BlockSparseMatrix::apply",
                format!("{n} rows"),
                x.rows(),
            ));
        }
        let width = x.cols();
        let mut out = Matrix::zeros(m, width);
        if self.row_sizes.len() == m && self.col_sizes.len() == n {
            // all blocks are 1 x 1: plain CSR
            let xs = x.as_slice();
            for_each_row(exec, out.as_mut_slice(), width, |i, dst| {
                let range = self.row_ptr[i]..self.row_ptr[i + 1];
                for (&c, &a) in self.block_col[range.clone()].iter().zip(&self.data[range]) {
                    axpy(a, &xs[c * width..(c + 1) * width], dst);
                }
            });
            return Ok(out);
        }
        for_each_row(exec, out.as_mut_slice(), width, |i, dst| {
            let r = self.row_block[i];
            let local = i - self.row_offsets[r];
            for blk in self.row_blocks(r) {
                let c0 = self.col_offsets[blk.col];
                let coeffs = &blk.values[local * blk.cols..(local + 1) * blk.cols];
                for (q, &a) in coeffs.iter().enumerate() {
                    if a != 0.0 {
                        axpy(a, x.row(c0 + q), dst);
                    }
                }
            }
        });
        Ok(out)
    }

    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(x.len(), 1, x.to_vec())?;
        Ok(self.apply(&m)?.into_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|p| a.get(i, p) * b.get(p, j)).sum()
        })
    }

    #[test]
    fn duplicate_coordinates_accumulate() {
        let mut b = BlockSparseBuilder::square(vec![1, 2]);
        b.add(1, 1, &Matrix::identity(2)).unwrap();
        b.add(1, 1, &Matrix::identity(2)).unwrap();
        b.add(0, 1, &Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        let m = b.build();
        assert_eq!(m.num_blocks(), 2);
        let d = m.to_dense();
        assert_eq!(d.get(1, 1), 2.0);
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.get(2, 0), 0.0);
    }

    #[test]
    fn nonconforming_block_rejected() {
        let mut b = BlockSparseBuilder::square(vec![1, 2]);
        assert!(b.add(0, 0, &Matrix::identity(2)).is_err());
        assert!(b.add(5, 0, &Matrix::identity(1)).is_err());
    }

    #[test]
    fn identity_and_zero_products() {
        let x = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 - 4.0);
        let id = BlockSparseMatrix::identity(vec![2, 1, 2]);
        assert_eq!(id.apply(&x).unwrap(), x);
        let z = BlockSparseMatrix::zeros(vec![2, 1, 2], vec![2, 1, 2]);
        assert_eq!(z.apply(&x).unwrap(), Matrix::zeros(5, 3));
        assert!(id.apply(&Matrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn transpose_matches_dense_transpose() {
        let d = Matrix::from_fn(5, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let m = BlockSparseMatrix::from_dense(&d, vec![2, 3], vec![1, 3]).unwrap();
        assert_eq!(m.transpose().to_dense(), d.transpose());
        assert_eq!(m.asymmetry(), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn sparse_product_equals_dense(
            sizes in prop::collection::vec(1usize..4, 1..6),
            mask in prop::collection::vec(any::<bool>(), 36),
            vals in prop::collection::vec(-2.0f64..2.0, 400),
            width in 1usize..5,
        ) {
            let n = sizes.len();
            let mut b = BlockSparseBuilder::square(sizes.clone());
            let mut cursor = 0;
            for r in 0..n {
                for c in 0..n {
                    if mask[r * n + c] {
                        let len = sizes[r] * sizes[c];
                        let block: Vec<f64> = (0..len).map(|t| vals[(cursor + t) % vals.len()]).collect();
                        cursor += len;
                        b.add_scaled_slice(r, c, 1.0, &block).unwrap();
                    }
                }
            }
            let m = b.build();
            let total: usize = sizes.iter().sum();
            let x = Matrix::from_fn(total, width, |i, j| vals[(7 * i + 3 * j) % vals.len()]);
            let sparse = m.apply(&x).unwrap();
            let dense = dense_mul(&m.to_dense(), &x);
            let scale = dense.max_abs().max(1.0);
            prop_assert!(sparse.max_abs_diff(&dense) <= 1e-12 * scale);
            let seq = m.apply_with(&x, Execution::Sequential).unwrap();
            prop_assert_eq!(seq, sparse);
        }
    }
}
