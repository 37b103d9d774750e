use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;

/// Mean softmax cross-entropy over the rows listed in `mask`.
///
/// Returns the loss and `dL/dlogits`, which is `(softmax - onehot) / |mask|`
/// on masked rows and zero elsewhere.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[usize]) -> Result<(f64, Matrix)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (rows, classes) = logits.shape();
    if labels.len() != rows {
        return Err(shape_err("softmax_cross_entropy", format!("{rows} labels"), labels.len()));
    }
    let mut grad = Matrix::zeros(rows, classes);
    let scale = 1.0 / mask.len() as f64;
    let mut total = 0.0;
    for &i in mask {
        if i >= rows {
            return Err(shape_err("softmax_cross_entropy", format!("mask index < {rows}"), i));
        }
        let label = labels[i];
        if label >= classes {
            return Err(shape_err("softmax_cross_entropy", format!("label < {classes}"), label));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_norm = max + sum.ln();
        total += log_norm - row[label];
        let g = grad.row_mut(i);
        for (c, &z) in row.iter().enumerate() {
            g[c] = (z - log_norm).exp() * scale;
        }
        g[label] -= scale;
    }
    Ok((total * scale, grad))
}
