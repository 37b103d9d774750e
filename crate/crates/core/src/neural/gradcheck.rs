//! Central finite-difference checks of a model's analytic gradients.
//!
//! Only `Model::forward` is used to build the numerical estimate, so the
//! check is independent of the backward pass it validates.

use super::loss::softmax_cross_entropy;
use super::model::Model;
use crate::error::Result;
use crate::linalg::{dot, Matrix};

/// Relative errors are computed as `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-3;

/// Scalar objective whose gradient is checked.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// `Σ_ij R_ij Y_ij`, so `dL/dY = R`.
    Weighted(&'a Matrix),
    /// Mean softmax cross-entropy over masked rows.
    CrossEntropy { labels: &'a [usize], mask: &'a [usize] },
}

impl Objective<'_> {
    fn eval(&self, y: &Matrix) -> Result<(f64, Matrix)> {
        match *self {
            Objective::Weighted(r) => Ok((dot(r.as_slice(), y.as_slice()), r.clone())),
            Objective::CrossEntropy { labels, mask } => softmax_cross_entropy(y, labels, mask),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over parameters and inputs.
    pub max_rel_error: f64,
    pub max_rel_error_params: f64,
    pub max_rel_error_input: f64,
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU (a kink between `±h`).
    pub skipped_kinks: usize,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares every parameter and input gradient against central differences
/// with step `h`. Leaves the model's parameters unchanged.
pub fn check_model(model: &mut Model, x: &Matrix, objective: Objective<'_>, h: f64) -> Result<GradCheckReport> {
    model.zero_grad();
    let y = model.forward(x)?;
    let (_, dy) = objective.eval(&y)?;
    let dx = model.backward(&dy)?;
    let pattern = model.relu_pattern();
    let analytic: Vec<Matrix> = model.params_mut().iter().map(|p| p.grad.clone()).collect();

    let mut report = GradCheckReport::default();
    let probe = |model: &mut Model, x: &Matrix| -> Result<Option<f64>> {
        let y = model.forward(x)?;
        let same = model.relu_pattern() == pattern;
        Ok(same.then_some(objective.eval(&y)?.0))
    };

    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..grad.as_slice().len() {
            let orig = model.params_mut()[pi].value.as_slice()[j];
            model.params_mut()[pi].value.as_mut_slice()[j] = orig + h;
            let plus = probe(model, x)?;
            model.params_mut()[pi].value.as_mut_slice()[j] = orig - h;
            let minus = probe(model, x)?;
            model.params_mut()[pi].value.as_mut_slice()[j] = orig;
            match (plus, minus) {
                (Some(p), Some(m)) => {
                    let e = rel_err(grad.as_slice()[j], (p - m) / (2.0 * h));
                    report.max_rel_error_params = report.max_rel_error_params.max(e);
                    report.checked += 1;
                }
                _ => report.skipped_kinks += 1,
            }
        }
    }

    let mut xp = x.clone();
    for j in 0..x.as_slice().len() {
        let orig = x.as_slice()[j];
        xp.as_mut_slice()[j] = orig + h;
        let plus = probe(model, &xp)?;
        xp.as_mut_slice()[j] = orig - h;
        let minus = probe(model, &xp)?;
        xp.as_mut_slice()[j] = orig;
        match (plus, minus) {
            (Some(p), Some(m)) => {
                let e = rel_err(dx.as_slice()[j], (p - m) / (2.0 * h));
                report.max_rel_error_input = report.max_rel_error_input.max(e);
                report.checked += 1;
            }
            _ => report.skipped_kinks += 1,
        }
    }
    report.max_rel_error = report.max_rel_error_params.max(report.max_rel_error_input);
    // restore caches and gradients at the unperturbed point
    model.zero_grad();
    let y = model.forward(x)?;
    model.backward(&objective.eval(&y)?.1)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::neural::{Activation, CombineMode, CombinedLayer, GcnLayer, InitScheme, Layer, SheafConvLayer};
    use crate::oracle::{random_sheaf, seeded, uniform_matrix};
    use crate::sheaf::{diffusion_alpha, sheaf_laplacian, BlockSparseMatrix};

    fn sheaf_operator(seed: u64, n: usize, k: usize) -> Arc<BlockSparseMatrix> {
        let mut rng = seeded(seed);
        let s = random_sheaf(&mut rng, n, 2 * n, k, k);
        Arc::new(diffusion_alpha(&sheaf_laplacian(&s), 0.2).unwrap())
    }

    #[test]
    fn sheafconv_layer_gradients() {
        let d = sheaf_operator(41, 6, 2);
        let mut rng = seeded(42);
        let layer = SheafConvLayer::init(&mut rng, &InitScheme { gain: 1.0, stalk_noise: 0.5 }, d, 2, 3, 2, Activation::Relu).unwrap();
        let mut model = Model::new(vec![layer.into()], 2).unwrap();
        let x = uniform_matrix(&mut rng, 12, 3, 1.0);
        let r = uniform_matrix(&mut rng, 12, 2, 1.0);
        let rep = check_model(&mut model, &x, Objective::Weighted(&r), 1e-5).unwrap();
        assert!(rep.max_rel_error < 1e-5, "{rep:?}");
        assert!(rep.checked > 40);
    }

    #[test]
    fn gcn_layer_gradients() {
        let d = sheaf_operator(43, 7, 1);
        let mut rng = seeded(44);
        let layer = GcnLayer::init(&mut rng, &InitScheme::default(), d, 4, 3, Activation::Relu).unwrap();
        let mut model = Model::new(vec![layer.into()], 1).unwrap();
        let x = uniform_matrix(&mut rng, 7, 4, 1.0);
        let r = uniform_matrix(&mut rng, 7, 3, 1.0);
        let rep = check_model(&mut model, &x, Objective::Weighted(&r), 1e-5).unwrap();
        assert!(rep.max_rel_error < 1e-5, "{rep:?}");
    }

    #[test]
    fn composed_model_cross_entropy_gradients() {
        let d = sheaf_operator(45, 6, 1);
        let mut rng = seeded(46);
        let mut model = Model::sheaf_nn(&mut rng, &InitScheme::default(), d, 1, 4, 5, 3, 2).unwrap();
        let x = uniform_matrix(&mut rng, 6, 4, 1.0);
        let labels = [0, 1, 1, 0, 1, 0];
        let mask = [0, 1, 2, 4];
        let rep = check_model(&mut model, &x, Objective::CrossEntropy { labels: &labels, mask: &mask }, 1e-5).unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn combined_layer_gradients() {
        let d1 = sheaf_operator(47, 5, 1);
        let d2 = sheaf_operator(48, 5, 1);
        let mut rng = seeded(49);
        for mode in [CombineMode::Concat, CombineMode::LearnedSum] {
            let w2 = if mode == CombineMode::Concat { 3 } else { 4 };
            let b1 = SheafConvLayer::init(&mut rng, &InitScheme::default(), d1.clone(), 1, 2, 4, Activation::Identity).unwrap();
            let b2 = SheafConvLayer::init(&mut rng, &InitScheme::default(), d2.clone(), 1, 2, w2, Activation::Identity).unwrap();
            let comb = CombinedLayer::new(vec![b1, b2], mode, Activation::Relu).unwrap();
            let out = comb.out_features();
            let mut model = Model::new(vec![Layer::Combined(comb)], 1).unwrap();
            let x = uniform_matrix(&mut rng, 5, 2, 1.0);
            let r = uniform_matrix(&mut rng, 5, out, 1.0);
            let rep = check_model(&mut model, &x, Objective::Weighted(&r), 1e-5).unwrap();
            assert!(rep.max_rel_error < 1e-5, "{mode:?}: {rep:?}");
        }
    }
}
