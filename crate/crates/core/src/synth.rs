//! Synthetic semisupervised node classification over signed graphs.
//!
//! Each node gets a standard-normal intrinsic vector `x_v`; its class is the
//! sign of `<c, x_v>`. Input features are a noisy random linear or two-layer
//! map of `x_v`, and edges join pairs whose noisy inner product exceeds `τ`
//! in magnitude, carrying that inner product as a signed weight.
//!
//! Randomness comes from ChaCha8 seeded with `config.seed`, one stream per
//! stage (see [`Stage`]). Every stage draws standard normals `z` and scales
//! them by `σ`, so changing a noise level never moves any other draw.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, FeatureMatrix, Matrix};
use crate::sheaf::{diffusion_alpha, sheaf_laplacian, BlockSparseMatrix, CellularSheaf, Edge, EdgeMaps, Graph};

/// Resampling budget for the noise row of an isolated node.
pub const ISOLATED_RETRIES: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    #[default]
    Linear,
    Nonlinear,
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::Linear => "linear",
            FeatureMode::Nonlinear => "nonlinear",
        })
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FeatureMode::Linear),
            "nonlinear" => Ok(FeatureMode::Nonlinear),
            other => Err(Error::InvalidConfig(format!("unknown feature mode {other:?}"))),
        }
    }
}

/// Degree used to scale the sheaf Laplacian in [`build_diffusion_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    /// Number of incident edges.
    #[default]
    Unweighted,
    /// Sum of incident `|w|`; keeps the diffusion spectrum inside `[-1, 1]`.
    Weighted,
}

impl std::str::FromStr for DegreeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unweighted" => Ok(DegreeMode::Unweighted),
            "weighted" => Ok(DegreeMode::Weighted),
            other => Err(Error::InvalidConfig(format!("unknown degree mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub n_intrinsic: usize,
    pub n_feat_in: usize,
    pub tau: f64,
    pub sigma_feat_sq: f64,
    pub sigma_w_sq: f64,
    pub feature_mode: FeatureMode,
    pub nonlinear_hidden: usize,
    pub train_fraction: f64,
    pub degree_mode: DegreeMode,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_nodes: 500,
            n_intrinsic: 25,
            n_feat_in: 32,
            tau: 0.5,
            sigma_feat_sq: 0.0,
            sigma_w_sq: 0.0,
            feature_mode: FeatureMode::Linear,
            nonlinear_hidden: 32,
            train_fraction: 0.75,
            degree_mode: DegreeMode::Unweighted,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.num_nodes == 0 || self.n_intrinsic == 0 || self.n_feat_in == 0 || self.nonlinear_hidden == 0 {
            return bad("counts must be positive");
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return bad("tau must be >= 0");
        }
        for (name, s) in [("sigma_feat_sq", self.sigma_feat_sq), ("sigma_w_sq", self.sigma_w_sq)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {s}")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Pipeline stages and their ChaCha8 stream ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Intrinsic features, then the class vector.
    Intrinsic = 1,
    Projection = 2,
    FeatureNoise = 3,
    EdgeNoise = 4,
    Split = 5,
    IsolatedRetry = 6,
}

/// Generator for one stage of the pipeline seeded by `seed`.
pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// `N_v x N_intrinsic` standard-normal features and a standard-normal class
/// vector, drawn in that order.
pub fn sample_intrinsic(config: &SyntheticConfig, rng: &mut impl Rng) -> (Matrix, Vec<f64>) {
    let x = normal_matrix(rng, config.num_nodes, config.n_intrinsic);
    let c = (0..config.n_intrinsic).map(|_| normal(rng)).collect();
    (x, c)
}

/// Class 1 when `<c, x_v> >= 0`, class 0 otherwise.
pub fn assign_classes(intrinsic: &Matrix, c: &[f64]) -> Result<Vec<usize>> {
    if intrinsic.cols() != c.len() {
        return Err(shape_err("assign_classes", intrinsic.cols(), c.len()));
    }
    Ok((0..intrinsic.rows())
        .map(|v| usize::from(dot(intrinsic.row(v), c) >= 0.0))
        .collect())
}

/// Projection matrices of the feature map.
#[derive(Clone, Debug, PartialEq)]
pub enum Projection {
    /// `P`, `N_feat_in x N_intrinsic`.
    Linear(Matrix),
    /// `P₁` (`hidden x N_intrinsic`) and `P₂` (`N_feat_in x hidden`).
    Nonlinear(Matrix, Matrix),
}

impl Projection {
    pub fn sample(config: &SyntheticConfig, rng: &mut impl Rng) -> Self {
        match config.feature_mode {
            FeatureMode::Linear => Projection::Linear(normal_matrix(rng, config.n_feat_in, config.n_intrinsic)),
            FeatureMode::Nonlinear => {
                let p1 = normal_matrix(rng, config.nonlinear_hidden, config.n_intrinsic);
                let p2 = normal_matrix(rng, config.n_feat_in, config.nonlinear_hidden);
                Projection::Nonlinear(p1, p2)
            }
        }
    }

    /// Applies the map with noise `sigma * z`, `z` drawn row-major from `noise`.
    pub fn apply(&self, intrinsic: &Matrix, sigma: f64, noise: &mut impl Rng) -> Result<FeatureMatrix> {
        let noisy = |mut m: Matrix, noise: &mut dyn FnMut() -> f64| {
            m.as_mut_slice().iter_mut().for_each(|v| *v += sigma * noise());
            m
        };
        let mut z = || normal(noise);
        match self {
            Projection::Linear(p) => Ok(noisy(intrinsic.matmul_t(p)?, &mut z)),
            Projection::Nonlinear(p1, p2) => {
                let h = noisy(intrinsic.matmul_t(p1)?, &mut z).map(|v| v.max(0.0));
                h.matmul_t(p2)
            }
        }
    }
}

/// `X Pᵀ + σ_feat Z`.
pub fn linear_features(intrinsic: &Matrix, config: &SyntheticConfig, rng: &mut impl Rng) -> Result<FeatureMatrix> {
    let p = normal_matrix(rng, config.n_feat_in, config.n_intrinsic);
    Projection::Linear(p).apply(intrinsic, config.sigma_feat_sq.sqrt(), rng)
}

/// `ReLU(X P₁ᵀ + σ_feat Z) P₂ᵀ`.
pub fn nonlinear_features(intrinsic: &Matrix, config: &SyntheticConfig, rng: &mut impl Rng) -> Result<FeatureMatrix> {
    let p1 = normal_matrix(rng, config.nonlinear_hidden, config.n_intrinsic);
    let p2 = normal_matrix(rng, config.n_feat_in, config.nonlinear_hidden);
    Projection::Nonlinear(p1, p2).apply(intrinsic, config.sigma_feat_sq.sqrt(), rng)
}

/// Signed threshold graph on the rows of `intrinsic`.
///
/// Pairs `u < v` are visited in lexicographic order, each drawing one `z`
/// from `noise`; the pair is an edge with weight `w = <x_u, x_v> + σ_w z`
/// when `|w| > τ`. An isolated node then has its whole noise row redrawn from
/// `retry`, up to [`ISOLATED_RETRIES`] times, before `DegenerateGraph`.
pub fn generate_graph(
    intrinsic: &Matrix,
    config: &SyntheticConfig,
    noise: &mut impl Rng,
    retry: &mut impl Rng,
) -> Result<Graph> {
    let n = intrinsic.rows();
    if n < 2 {
        return Err(Error::DegenerateGraph(format!("need at least 2 nodes, got {n}")));
    }
    let sigma = config.sigma_w_sq.sqrt();
    let tau = config.tau;
    let weight = |u: usize, v: usize, z: f64| dot(intrinsic.row(u), intrinsic.row(v)) + sigma * z;

    let mut edges = Vec::new();
    let mut degree = vec![0usize; n];
    for u in 0..n {
        for v in u + 1..n {
            let w = weight(u, v, normal(noise));
            if w.abs() > tau {
                edges.push(Edge::weighted(u, v, w));
                degree[u] += 1;
                degree[v] += 1;
            }
        }
    }

    if degree.contains(&0) {
        let mut extra: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for u in 0..n {
            let mut attempts = 0;
            while degree[u] == 0 {
                if attempts == ISOLATED_RETRIES {
                    return Err(Error::DegenerateGraph(format!(
                        "node {u} stays isolated after {ISOLATED_RETRIES} noise resamples"
                    )));
                }
                attempts += 1;
                for v in (0..n).filter(|&v| v != u) {
                    let w = weight(u, v, normal(retry));
                    if w.abs() > tau {
                        extra.insert((u.min(v), u.max(v)), w);
                        degree[u] += 1;
                        degree[v] += 1;
                    }
                }
            }
        }
        edges.extend(extra.into_iter().map(|((u, v), w)| Edge::weighted(u, v, w)));
        edges.sort_by_key(|e| (e.u, e.v));
    }
    Graph::new(n, edges)
}

/// `k = 1` sheaf with maps `±√|w|`; a negative edge carries the minus sign
/// on its higher-index endpoint.
pub fn build_signed_sheaf(graph: &Graph) -> Result<CellularSheaf> {
    let maps = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if e.weight == 0.0 {
                return Err(Error::ZeroWeightEdge { edge: i });
            }
            let s = e.weight.abs().sqrt();
            Ok(EdgeMaps::scalar(s, s.copysign(e.weight)))
        })
        .collect::<Result<Vec<_>>>()?;
    CellularSheaf::new(graph.clone(), 1, maps)
}

/// `I - L / d_max` with the unweighted maximum degree.
pub fn build_diffusion(sheaf: &CellularSheaf) -> Result<BlockSparseMatrix> {
    build_diffusion_with(sheaf, DegreeMode::Unweighted)
}

pub fn build_diffusion_with(sheaf: &CellularSheaf, mode: DegreeMode) -> Result<BlockSparseMatrix> {
    let g = sheaf.graph();
    if g.num_edges() == 0 {
        return Err(Error::DegenerateGraph("graph has no edges".into()));
    }
    let d_max = match mode {
        DegreeMode::Unweighted => g.max_degree() as f64,
        DegreeMode::Weighted => g.weighted_degrees().into_iter().fold(0.0, f64::max),
    };
    diffusion_alpha(&sheaf_laplacian(sheaf), 1.0 / d_max)
}

/// Shuffles the nodes and sends the first `round(f N)` to training. Both
/// index lists are returned sorted.
pub fn split_train_test(config: &SyntheticConfig, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let n = config.num_nodes;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let n_train = ((config.train_fraction * n as f64).round() as usize).min(n);
    let mut test = perm.split_off(n_train);
    perm.sort_unstable();
    test.sort_unstable();
    (perm, test)
}

/// Hidden draws kept for oracles; not serialized.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub intrinsic: Matrix,
    pub class_vector: Vec<f64>,
    pub projection: Projection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub graph: Graph,
    pub sheaf: CellularSheaf,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub hidden: Option<HiddenState>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    config: SyntheticConfig,
    graph: Graph,
    features: Matrix,
    labels: Vec<usize>,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
}

impl SyntheticDataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn diffusion(&self) -> Result<BlockSparseMatrix> {
        build_diffusion_with(&self.sheaf, self.config.degree_mode)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = DatasetFile {
            config: self.config.clone(),
            graph: self.graph.clone(),
            features: self.features.clone(),
            labels: self.labels.clone(),
            train_idx: self.train_idx.clone(),
            test_idx: self.test_idx.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Rebuilds the sheaf from the stored weights; hidden state is absent.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: DatasetFile = serde_json::from_str(s)?;
        let n = f.graph.num_nodes();
        if f.features.rows() != n || f.labels.len() != n {
            return Err(shape_err("SyntheticDataset::from_json_str", n, format!("{} feature rows, {} labels", f.features.rows(), f.labels.len())));
        }
        let mut seen = vec![false; n];
        for &i in f.train_idx.iter().chain(&f.test_idx) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidConfig(format!("train/test indices must partition 0..{n}")));
            }
        }
        if seen.contains(&false) {
            return Err(Error::InvalidConfig(format!("train/test indices must partition 0..{n}")));
        }
        Ok(SyntheticDataset {
            sheaf: build_signed_sheaf(&f.graph)?,
            config: f.config,
            graph: f.graph,
            features: f.features,
            labels: f.labels,
            train_idx: f.train_idx,
            test_idx: f.test_idx,
            hidden: None,
        })
    }
}

/// Runs the whole pipeline, each stage on its own stream of `config.seed`.
pub fn generate_dataset(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let seed = config.seed;
    let (intrinsic, class_vector) = sample_intrinsic(config, &mut stage_rng(seed, Stage::Intrinsic));
    let labels = assign_classes(&intrinsic, &class_vector)?;
    let projection = Projection::sample(config, &mut stage_rng(seed, Stage::Projection));
    let features = projection.apply(
        &intrinsic,
        config.sigma_feat_sq.sqrt(),
        &mut stage_rng(seed, Stage::FeatureNoise),
    )?;
    let graph = generate_graph(
        &intrinsic,
        config,
        &mut stage_rng(seed, Stage::EdgeNoise),
        &mut stage_rng(seed, Stage::IsolatedRetry),
    )?;
    let sheaf = build_signed_sheaf(&graph)?;
    let (train_idx, test_idx) = split_train_test(config, &mut stage_rng(seed, Stage::Split));
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "split of {} nodes at fraction {} leaves an empty side",
            config.num_nodes, config.train_fraction
        )));
    }
    Ok(SyntheticDataset {
        config: config.clone(),
        graph,
        sheaf,
        features,
        labels,
        train_idx,
        test_idx,
        hidden: Some(HiddenState {
            intrinsic,
            class_vector,
            projection,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense_product;

    fn cfg(n: usize) -> SyntheticConfig {
        SyntheticConfig {
            num_nodes: n,
            seed: 11,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn intrinsic_moments() {
        let (x, c) = sample_intrinsic(&cfg(5000), &mut stage_rng(3, Stage::Intrinsic));
        let n = x.as_slice().len() as f64;
        let mean = x.as_slice().iter().sum::<f64>() / n;
        let var = x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
        assert_eq!(c.len(), 25);
        let (x2, c2) = sample_intrinsic(&cfg(5000), &mut stage_rng(3, Stage::Intrinsic));
        assert_eq!((x, c), (x2, c2));
    }

    #[test]
    fn classes_and_ties() {
        let c = vec![1.0, -2.0, 0.5];
        let x = Matrix::from_rows(&[c.clone(), c.iter().map(|v| -v).collect(), vec![0.0; 3], vec![2.0, 1.0, 0.0]]).unwrap();
        assert_eq!(assign_classes(&x, &c).unwrap(), vec![1, 0, 1, 1]);
        assert!(assign_classes(&x, &[1.0]).is_err());
    }

    #[test]
    fn class_balance() {
        let d = generate_dataset(&SyntheticConfig { num_nodes: 5000, tau: f64::INFINITY, ..cfg(0) });
        // every pair is excluded, so the graph is degenerate
        assert!(matches!(d, Err(Error::DegenerateGraph(_))));
        let (x, c) = sample_intrinsic(&cfg(5000), &mut stage_rng(5, Stage::Intrinsic));
        let ones = assign_classes(&x, &c).unwrap().iter().sum::<usize>() as f64 / 5000.0;
        assert!((0.45..=0.55).contains(&ones), "{ones}");
    }

    #[test]
    fn linear_features_noise_free_and_variance() {
        let config = cfg(5000);
        let (x, _) = sample_intrinsic(&config, &mut stage_rng(1, Stage::Intrinsic));
        let mut rng = stage_rng(2, Stage::Projection);
        let p = normal_matrix(&mut rng, 32, 25);
        let clean = linear_features(&x, &config, &mut stage_rng(2, Stage::Projection)).unwrap();
        assert_eq!(clean, x.matmul_t(&p).unwrap());

        let noisy = linear_features(&x, &SyntheticConfig { sigma_feat_sq: 4.0, ..config.clone() }, &mut stage_rng(2, Stage::Projection)).unwrap();
        let var = noisy.as_slice().iter().map(|v| v * v).sum::<f64>() / noisy.as_slice().len() as f64;
        // per-entry variance is |P_i|² + σ²; average over rows of P
        let expected = p.as_slice().iter().map(|v| v * v).sum::<f64>() / 32.0 + 4.0;
        assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
        assert!((var / 29.0 - 1.0).abs() < 0.25, "{var}");
    }

    #[test]
    fn nonlinear_features_match_straight_line_oracle() {
        let config = SyntheticConfig { feature_mode: FeatureMode::Nonlinear, sigma_feat_sq: 0.3, ..cfg(10) };
        let (x, _) = sample_intrinsic(&config, &mut stage_rng(4, Stage::Intrinsic));
        let got = nonlinear_features(&x, &config, &mut stage_rng(4, Stage::Projection)).unwrap();

        let mut rng = stage_rng(4, Stage::Projection);
        let p1 = normal_matrix(&mut rng, 32, 25);
        let p2 = normal_matrix(&mut rng, 32, 32);
        let eps = normal_matrix(&mut rng, 10, 32);
        let sigma = 0.3f64.sqrt();
        for v in 0..10 {
            let hidden: Vec<f64> = (0..32)
                .map(|j| (dot(p1.row(j), x.row(v)) + sigma * eps.get(v, j)).max(0.0))
                .collect();
            for i in 0..32 {
                let want = dot(p2.row(i), &hidden);
                assert!((got.get(v, i) - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn nonlinear_degenerate_maps() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let p1 = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        let zero = Projection::Nonlinear(p1, Matrix::zeros(3, 2));
        assert_eq!(zero.apply(&x, 0.0, &mut stage_rng(0, Stage::FeatureNoise)).unwrap(), Matrix::zeros(1, 3));
        // both hidden units are negative at x = (1, 2)
        let neg = Matrix::from_rows(&[vec![-1.0, -1.0], vec![-2.0, 0.0]]).unwrap();
        let dead = Projection::Nonlinear(neg, Matrix::identity(2));
        assert_eq!(dead.apply(&x, 0.0, &mut stage_rng(0, Stage::FeatureNoise)).unwrap(), Matrix::zeros(1, 2));
    }

    #[test]
    fn two_node_threshold() {
        let x = Matrix::from_rows(&[vec![0.7, 0.0], vec![1.0, 5.0]]).unwrap();
        let g = generate_graph(&x, &cfg(2), &mut stage_rng(0, Stage::EdgeNoise), &mut stage_rng(0, Stage::IsolatedRetry)).unwrap();
        assert_eq!(g.edges(), &[Edge::weighted(0, 1, 0.7)]);
        let far = Matrix::from_rows(&[vec![0.1, 0.0], vec![1.0, 5.0]]).unwrap();
        assert!(matches!(
            generate_graph(&far, &cfg(2), &mut stage_rng(0, Stage::EdgeNoise), &mut stage_rng(0, Stage::IsolatedRetry)),
            Err(Error::DegenerateGraph(_))
        ));
    }

    #[test]
    fn threshold_matches_brute_force() {
        let config = cfg(200);
        let (x, _) = sample_intrinsic(&config, &mut stage_rng(9, Stage::Intrinsic));
        let g = generate_graph(&x, &config, &mut stage_rng(9, Stage::EdgeNoise), &mut stage_rng(9, Stage::IsolatedRetry)).unwrap();
        let gram = dense_product(&x, &x.transpose());
        let mut expected = Vec::new();
        for u in 0..200 {
            for v in u + 1..200 {
                if gram.get(u, v).abs() > 0.5 {
                    expected.push((u, v));
                }
            }
        }
        let got: Vec<_> = g.edges().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(got, expected);
        for e in g.edges() {
            assert!((e.weight - gram.get(e.u, e.v)).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_threshold_is_consistent_with_draws() {
        let config = SyntheticConfig { sigma_w_sq: 2.0, ..cfg(60) };
        let (x, _) = sample_intrinsic(&config, &mut stage_rng(2, Stage::Intrinsic));
        let g = generate_graph(&x, &config, &mut stage_rng(2, Stage::EdgeNoise), &mut stage_rng(2, Stage::IsolatedRetry)).unwrap();
        let mut z = stage_rng(2, Stage::EdgeNoise);
        let kept: std::collections::HashMap<_, _> = g.edges().iter().map(|e| ((e.u, e.v), e.weight)).collect();
        for u in 0..60 {
            for v in u + 1..60 {
                let w = dot(x.row(u), x.row(v)) + 2f64.sqrt() * normal(&mut z);
                match kept.get(&(u, v)) {
                    Some(&k) => assert!(k == w && w.abs() > 0.5),
                    None => assert!(w.abs() <= 0.5),
                }
            }
        }
    }

    #[test]
    fn isolated_node_is_resampled() {
        // node 2 is orthogonal to everyone; heavy noise gives it edges on retry
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let config = SyntheticConfig { sigma_w_sq: 1.0, tau: 0.5, ..cfg(3) };
        let mut found = false;
        for s in 0..20 {
            let mut noise = stage_rng(s, Stage::EdgeNoise);
            let mut retry = stage_rng(s, Stage::IsolatedRetry);
            let g = generate_graph(&x, &config, &mut noise, &mut retry).unwrap();
            assert!(g.isolated_nodes().is_empty());
            found |= g.num_edges() > 0;
        }
        assert!(found);
        let zero_noise = SyntheticConfig { sigma_w_sq: 0.0, ..config };
        let r = generate_graph(&x, &zero_noise, &mut stage_rng(0, Stage::EdgeNoise), &mut stage_rng(0, Stage::IsolatedRetry));
        assert!(matches!(r, Err(Error::DegenerateGraph(_))));
    }

    #[test]
    fn signed_sheaf_single_edges() {
        for (w, expected) in [(1.0, [[1.0, -1.0], [-1.0, 1.0]]), (-1.0, [[1.0, 1.0], [1.0, 1.0]]), (-4.0, [[4.0, 4.0], [4.0, 4.0]])] {
            let g = Graph::new(2, vec![Edge::weighted(0, 1, w)]).unwrap();
            let s = build_signed_sheaf(&g).unwrap();
            let l = sheaf_laplacian(&s).to_dense();
            assert_eq!(l, Matrix::from_rows(&expected.map(|r| r.to_vec())).unwrap());
        }
        let (_, tail, _, head) = build_signed_sheaf(&Graph::new(2, vec![Edge::weighted(0, 1, -4.0)]).unwrap())
            .map(|s| {
                let (a, fa, b, fb) = s.oriented(0);
                (a, fa.get(0, 0), b, fb.get(0, 0))
            })
            .unwrap();
        assert_eq!((tail, head), (2.0, -2.0));
        let zero = Graph::new(3, vec![Edge::weighted(0, 1, 1.0), Edge::weighted(1, 2, 0.0)]).unwrap();
        assert!(matches!(build_signed_sheaf(&zero), Err(Error::ZeroWeightEdge { edge: 1 })));
    }

    #[test]
    fn sheaf_sign_and_diagonal_invariants() {
        let d = generate_dataset(&SyntheticConfig { sigma_w_sq: 0.5, ..cfg(80) }).unwrap();
        for (e, m) in d.graph.edges().iter().zip(d.sheaf.maps()) {
            let (a, b) = (m.tail.get(0, 0), m.head.get(0, 0));
            assert_eq!((a * b).signum(), e.weight.signum());
            assert!((a.abs() - e.weight.abs().sqrt()).abs() < 1e-15 && (b.abs() - a.abs()).abs() == 0.0);
        }
        let l = sheaf_laplacian(&d.sheaf).to_dense();
        let wdeg = d.graph.weighted_degrees();
        for v in 0..80 {
            assert!((l.get(v, v) - wdeg[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn diffusion_examples() {
        let one = build_signed_sheaf(&Graph::new(2, vec![Edge::weighted(0, 1, 1.0)]).unwrap()).unwrap();
        assert_eq!(build_diffusion(&one).unwrap().to_dense(), Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());

        let star = build_signed_sheaf(&Graph::from_pairs(4, &[(0, 1), (0, 2), (0, 3)]).unwrap()).unwrap();
        let d = build_diffusion(&star).unwrap().to_dense();
        assert_eq!(d.get(0, 0), 0.0);

        let ds = generate_dataset(&cfg(60)).unwrap();
        let lap = sheaf_laplacian(&ds.sheaf).to_dense();
        let dmax = ds.graph.max_degree() as f64;
        let back = ds.diffusion().unwrap().to_dense().add(&lap.scale(1.0 / dmax)).unwrap();
        assert!(back.max_abs_diff(&Matrix::identity(60)) < 1e-14);

        let empty = build_signed_sheaf(&Graph::new(3, vec![]).unwrap()).unwrap();
        assert!(matches!(build_diffusion(&empty), Err(Error::DegenerateGraph(_))));
    }

    #[test]
    fn weighted_degree_mode_bounds_spectrum() {
        let ds = generate_dataset(&SyntheticConfig { degree_mode: DegreeMode::Weighted, ..cfg(40) }).unwrap();
        let d = ds.diffusion().unwrap().to_dense();
        assert!(crate::oracle::dense_spectral_norm(&d) <= 1.0 + 1e-10);
    }

    #[test]
    fn split_shapes_and_determinism() {
        let (tr, te) = split_train_test(&cfg(4), &mut stage_rng(0, Stage::Split));
        assert_eq!((tr.len(), te.len()), (3, 1));
        for n in [1, 2, 7, 100, 333] {
            let (tr, te) = split_train_test(&cfg(n), &mut stage_rng(n as u64, Stage::Split));
            let mut all: Vec<_> = tr.iter().chain(&te).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert_eq!(tr.len(), (0.75 * n as f64).round() as usize);
            assert_eq!((tr.clone(), te.clone()), split_train_test(&cfg(n), &mut stage_rng(n as u64, Stage::Split)));
        }
    }

    #[test]
    fn noise_free_pipeline_oracle() {
        let config = cfg(50);
        let d = generate_dataset(&config).unwrap();
        let d2 = generate_dataset(&config).unwrap();
        assert_eq!(d, d2);
        let h = d.hidden.as_ref().unwrap();
        assert_eq!(assign_classes(&h.intrinsic, &h.class_vector).unwrap(), d.labels);
        let Projection::Linear(p) = &h.projection else { panic!("linear mode") };
        assert!(d.features.max_abs_diff(&dense_product(&h.intrinsic, &p.transpose())) < 1e-12);
        let gram = dense_product(&h.intrinsic, &h.intrinsic.transpose());
        let n_expected = (0..50).flat_map(|u| (u + 1..50).map(move |v| (u, v))).filter(|&(u, v)| gram.get(u, v).abs() > 0.5).count();
        assert_eq!(d.graph.num_edges(), n_expected);
    }

    #[test]
    fn noise_levels_do_not_move_other_draws() {
        let base = generate_dataset(&cfg(40)).unwrap();
        let noisy_w = generate_dataset(&SyntheticConfig { sigma_w_sq: 0.5, ..cfg(40) }).unwrap();
        assert_eq!(base.features, noisy_w.features);
        assert_eq!(base.train_idx, noisy_w.train_idx);
        let noisy_f = generate_dataset(&SyntheticConfig { sigma_feat_sq: 0.5, ..cfg(40) }).unwrap();
        assert_eq!(base.graph, noisy_f.graph);
        assert_ne!(base.features, noisy_f.features);
    }

    #[test]
    fn desk_size_has_no_isolated_nodes() {
        let d = generate_dataset(&cfg(500)).unwrap();
        assert!(d.graph.num_edges() > 0);
        assert!(d.graph.isolated_nodes().is_empty());
        assert_eq!(d.train_idx.len(), 375);
    }

    #[test]
    fn homophily_gap() {
        let config = cfg(1000);
        let (x, c) = sample_intrinsic(&config, &mut stage_rng(21, Stage::Intrinsic));
        let labels = assign_classes(&x, &c).unwrap();
        let g = generate_graph(&x, &config, &mut stage_rng(21, Stage::EdgeNoise), &mut stage_rng(21, Stage::IsolatedRetry)).unwrap();
        let (mut same, mut same_pos, mut diff, mut diff_pos) = (0usize, 0usize, 0usize, 0usize);
        for e in g.edges() {
            let pos = usize::from(e.weight > 0.0);
            if labels[e.u] == labels[e.v] {
                same += 1;
                same_pos += pos;
            } else {
                diff += 1;
                diff_pos += pos;
            }
        }
        assert!(same_pos as f64 / same as f64 > diff_pos as f64 / diff as f64);
    }

    #[test]
    fn json_round_trip() {
        let d = generate_dataset(&SyntheticConfig { sigma_feat_sq: 0.5, sigma_w_sq: 0.5, ..cfg(30) }).unwrap();
        let s = d.to_json_string().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["config", "graph", "features", "labels", "train_idx", "test_idx"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back = SyntheticDataset::from_json_str(&s).unwrap();
        assert_eq!(back.features, d.features);
        assert_eq!(back.sheaf, d.sheaf);
        assert_eq!(back.config, d.config);
        assert!(back.hidden.is_none());
        let broken = s.replace("\"test_idx\":[", "\"test_idx\":[0,");
        assert!(SyntheticDataset::from_json_str(&broken).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SyntheticConfig::default().validate().is_ok());
        for bad in [
            SyntheticConfig { num_nodes: 0, ..cfg(1) },
            SyntheticConfig { tau: -1.0, ..cfg(10) },
            SyntheticConfig { sigma_w_sq: -0.1, ..cfg(10) },
            SyntheticConfig { train_fraction: 1.0, ..cfg(10) },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
        let parsed: SyntheticConfig = serde_json::from_str(r#"{"num_nodes": 20, "feature_mode": "nonlinear"}"#).unwrap();
        assert_eq!(parsed.feature_mode, FeatureMode::Nonlinear);
        assert_eq!(parsed.tau, 0.5);
        assert!(serde_json::from_str::<SyntheticConfig>(r#"{"nodes": 20}"#).is_err());
    }
}
