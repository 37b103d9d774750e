//! Training runs over a noise grid comparing sheaf networks with GCNs.
//!
//! For every grid cell and trial one dataset is generated and shared by all
//! models. The dataset seed depends only on the master seed and the trial
//! index, and model init seeds hash the dataset seed with the model name, so
//! adding models or grid values never changes any other draw.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::exec::{map_indices, Execution};
use crate::linalg::Matrix;
use crate::neural::{softmax_cross_entropy, AdamConfig, AdamState, InitScheme, Model};
use crate::sheaf::{BlockSparseBuilder, BlockSparseMatrix, Graph};
use crate::synth::{generate_dataset, DegreeMode, FeatureMode, SyntheticConfig, SyntheticDataset};

pub const CSV_HEADER: &str =
    "model,layers,hidden,feature_mode,sigma_feat_sq,sigma_w_sq,seed,epoch,train_loss,train_acc,test_acc,wall_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    SheafNn,
    Gcn,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub arch: Architecture,
    pub layers: usize,
    pub hidden: usize,
}

impl ModelSpec {
    pub fn new(arch: Architecture, layers: usize, hidden: usize) -> Self {
        let family = match arch {
            Architecture::SheafNn => "SheafNN",
            Architecture::Gcn => "GCN",
        };
        let name = match (layers, hidden) {
            (3, 32) | (4, 16) => format!("{family}-{hidden}"),
            _ => format!("{family}-{layers}x{hidden}"),
        };
        ModelSpec { name, arch, layers, hidden }
    }

    /// Parses `SheafNN-32` (3 x 32), `SheafNN-16` (4 x 16), the GCN
    /// equivalents, or an explicit `<family>-<layers>x<hidden>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown model {s:?}; expected e.g. SheafNN-32, GCN-16, GCN-2x8"));
        let (family, shape) = s.split_once('-').ok_or_else(bad)?;
        let arch = match family.to_ascii_lowercase().as_str() {
            "sheafnn" => Architecture::SheafNn,
            "gcn" => Architecture::Gcn,
            _ => return Err(bad()),
        };
        let (layers, hidden) = match shape {
            "32" => (3, 32),
            "16" => (4, 16),
            _ => {
                let (l, h) = shape.split_once('x').ok_or_else(bad)?;
                (l.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?)
            }
        };
        if layers == 0 || hidden == 0 {
            return Err(bad());
        }
        Ok(ModelSpec::new(arch, layers, hidden))
    }

    pub fn defaults() -> Vec<ModelSpec> {
        vec![
            ModelSpec::new(Architecture::SheafNn, 3, 32),
            ModelSpec::new(Architecture::SheafNn, 4, 16),
            ModelSpec::new(Architecture::Gcn, 3, 32),
            ModelSpec::new(Architecture::Gcn, 4, 16),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 500 nodes, 300 epochs.
    Desk,
    /// 5000 nodes, 1000 epochs.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub models: Vec<ModelSpec>,
    pub feature_mode: FeatureMode,
    /// Degree normalization of the sheaf diffusion operator.
    pub degree_mode: DegreeMode,
    pub sigma_feat_sq: Vec<f64>,
    pub sigma_w_sq: Vec<f64>,
    pub trials: usize,
    pub nodes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub log_interval: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let (nodes, epochs) = match p {
            Preset::Desk => (500, 300),
            Preset::Paper => (5000, 1000),
        };
        ExperimentConfig {
            models: ModelSpec::defaults(),
            feature_mode: FeatureMode::Linear,
            degree_mode: DegreeMode::Weighted,
            sigma_feat_sq: vec![0.0, 0.5],
            sigma_w_sq: vec![0.0, 0.5],
            trials: 5,
            nodes,
            epochs,
            lr: 1e-3,
            log_interval: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.models.is_empty() || self.sigma_feat_sq.is_empty() || self.sigma_w_sq.is_empty() {
            return bad("model list and noise grids must be nonempty".into());
        }
        if self.trials == 0 || self.log_interval == 0 {
            return bad("trials and log interval must be >= 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        for &s in self.sigma_feat_sq.iter().chain(&self.sigma_w_sq) {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("noise variances must be finite and >= 0, got {s}"));
            }
        }
        self.dataset_config(self.sigma_feat_sq[0], self.sigma_w_sq[0], 0).validate()
    }

    pub fn dataset_config(&self, sigma_feat_sq: f64, sigma_w_sq: f64, trial: usize) -> SyntheticConfig {
        SyntheticConfig {
            num_nodes: self.nodes,
            sigma_feat_sq,
            sigma_w_sq,
            feature_mode: self.feature_mode,
            degree_mode: self.degree_mode,
            seed: dataset_seed(self.seed, trial),
            ..SyntheticConfig::default()
        }
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.sigma_feat_sq
            .iter()
            .flat_map(|&f| self.sigma_w_sq.iter().map(move |&w| (f, w)))
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// `splitmix64(master ^ splitmix64(trial))`.
pub fn dataset_seed(master: u64, trial: usize) -> u64 {
    splitmix64(master ^ splitmix64(trial as u64))
}

/// `splitmix64(dataset_seed ^ fnv1a(name))`.
pub fn init_seed(dataset_seed: u64, model_name: &str) -> u64 {
    splitmix64(dataset_seed ^ fnv1a(model_name.as_bytes()))
}

/// `D̃^{-1/2} (|A| + I) D̃^{-1/2}` with `D̃` the degrees of `|A| + I`.
pub fn build_gcn_operator(graph: &Graph) -> Result<BlockSparseMatrix> {
    if graph.num_edges() == 0 {
        return Err(Error::DegenerateGraph("graph has no edges".into()));
    }
    if let Some(&v) = graph.isolated_nodes().first() {
        return Err(Error::DegenerateGraph(format!("node {v} is isolated")));
    }
    let n = graph.num_nodes();
    let deg: Vec<f64> = graph.weighted_degrees().iter().map(|d| 1.0 + d).collect();
    let mut b = BlockSparseBuilder::square(vec![1; n]);
    for (v, d) in deg.iter().enumerate() {
        b.add_scaled_slice(v, v, 1.0 / d, &[1.0])?;
    }
    for e in graph.edges() {
        let a = e.weight.abs() / (deg[e.u] * deg[e.v]).sqrt();
        b.add_scaled_slice(e.u, e.v, a, &[1.0])?;
        b.add_scaled_slice(e.v, e.u, a, &[1.0])?;
    }
    Ok(b.build())
}

/// Fraction of masked rows whose argmax equals the label; ties go to the
/// lowest class index.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if labels.len() != logits.rows() {
        return Err(shape_err("accuracy", format!("{} labels", logits.rows()), labels.len()));
    }
    let mut hits = 0usize;
    for &i in mask {
        if i >= logits.rows() {
            return Err(shape_err("accuracy", format!("mask index < {}", logits.rows()), i));
        }
        let row = logits.row(i);
        let best = (1..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        hits += usize::from(best == labels[i]);
    }
    Ok(hits as f64 / mask.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model: String,
    pub layers: usize,
    pub hidden: usize,
    pub feature_mode: FeatureMode,
    pub sigma_feat_sq: f64,
    pub sigma_w_sq: f64,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub wall_ms: u64,
}

/// A dataset with both propagation operators built once.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub data: SyntheticDataset,
    pub sheaf_diffusion: Arc<BlockSparseMatrix>,
    pub gcn_propagation: Arc<BlockSparseMatrix>,
}

impl PreparedDataset {
    pub fn new(data: SyntheticDataset) -> Result<Self> {
        Ok(PreparedDataset {
            sheaf_diffusion: Arc::new(data.diffusion()?),
            gcn_propagation: Arc::new(build_gcn_operator(&data.graph)?),
            data,
        })
    }

    pub fn build_model(&self, spec: &ModelSpec, seed: u64) -> Result<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fin = self.data.features.cols();
        let scheme = InitScheme::default();
        match spec.arch {
            Architecture::SheafNn => {
                Model::sheaf_nn(&mut rng, &scheme, self.sheaf_diffusion.clone(), 1, fin, spec.hidden, spec.layers, 2)
            }
            Architecture::Gcn => {
                Model::gcn(&mut rng, &scheme, self.gcn_propagation.clone(), fin, spec.hidden, spec.layers, 2)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub log_interval: usize,
    pub exec: Execution,
}

/// Full-graph Adam training. Logs epoch 0, every `log_interval` epochs and
/// the final epoch; each logged loss is evaluated before that epoch's update.
pub fn run_trial(
    prepared: &PreparedDataset,
    spec: &ModelSpec,
    settings: TrainSettings,
    seed: u64,
) -> Result<Vec<MetricsRecord>> {
    let d = &prepared.data;
    let mut model = prepared.build_model(spec, seed)?;
    model.set_execution(settings.exec);
    let mut adam = AdamState::new(AdamConfig::with_lr(settings.lr));
    let start = Instant::now();
    let mut records = Vec::new();
    for epoch in 0..=settings.epochs {
        let logits = model.forward(&d.features)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, &d.labels, &d.train_idx)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if epoch % settings.log_interval == 0 || epoch == settings.epochs {
            records.push(MetricsRecord {
                model: spec.name.clone(),
                layers: spec.layers,
                hidden: spec.hidden,
                feature_mode: d.config.feature_mode,
                sigma_feat_sq: d.config.sigma_feat_sq,
                sigma_w_sq: d.config.sigma_w_sq,
                seed: d.config.seed,
                epoch,
                train_loss: loss,
                train_acc: accuracy(&logits, &d.labels, &d.train_idx)?,
                test_acc: accuracy(&logits, &d.labels, &d.test_idx)?,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }
        if epoch < settings.epochs {
            model.zero_grad();
            model.backward(&dlogits)?;
            adam.step(&mut model.params_mut())?;
        }
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialFailure {
    pub cell: (f64, f64),
    pub model: String,
    pub trial: usize,
    pub error: String,
    pub non_finite: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub sigma_feat_sq: f64,
    pub sigma_w_sq: f64,
    pub model: String,
    /// Completed trials.
    pub n: usize,
    pub failed: usize,
    pub mean_test_acc: f64,
    /// Sample standard deviation (`n - 1`), zero for a single trial.
    pub std_test_acc: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GridOutcome {
    /// Sorted by cell, model, trial, epoch.
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<TrialFailure>,
}

impl GridOutcome {
    pub fn summary(&self, config: &ExperimentConfig) -> Vec<CellSummary> {
        let mut out = Vec::new();
        for (f, w) in config.cells() {
            for spec in &config.models {
                let finals: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.sigma_feat_sq == f && r.sigma_w_sq == w && r.model == spec.name && r.epoch == config.epochs)
                    .map(|r| r.test_acc)
                    .collect();
                let n = finals.len();
                let mean = if n == 0 { f64::NAN } else { finals.iter().sum::<f64>() / n as f64 };
                let std = if n < 2 {
                    0.0
                } else {
                    (finals.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                };
                let failed = self
                    .failures
                    .iter()
                    .filter(|x| x.cell == (f, w) && x.model == spec.name)
                    .count();
                out.push(CellSummary {
                    sigma_feat_sq: f,
                    sigma_w_sq: w,
                    model: spec.name.clone(),
                    n,
                    failed,
                    mean_test_acc: mean,
                    std_test_acc: std,
                });
            }
        }
        out
    }
}

/// Renders the summary as an aligned text table.
pub fn format_summary(rows: &[CellSummary]) -> String {
    let mut s = format!("{:>13} {:>10} {:<12} {:>17} {:>7}\n", "sigma_feat_sq", "sigma_w_sq", "model", "test_acc", "trials");
    for r in rows {
        let acc = if r.n == 0 { "-".to_string() } else { format!("{:.4} ± {:.4}", r.mean_test_acc, r.std_test_acc) };
        let trials = if r.failed == 0 { r.n.to_string() } else { format!("{}/{}", r.n, r.n + r.failed) };
        s.push_str(&format!("{:>13} {:>10} {:<12} {:>17} {:>7}\n", r.sigma_feat_sq, r.sigma_w_sq, r.model, acc, trials));
    }
    s
}

type TrialResult = std::result::Result<Vec<MetricsRecord>, (bool, String)>;

/// Trains every model on every (cell, trial) dataset.
///
/// Datasets are processed one at a time and the models of a dataset run
/// concurrently under `exec`. Failed trials are collected, not fatal.
/// `progress` is called after each dataset with `(done, total)`.
pub fn run_grid(config: &ExperimentConfig, exec: Execution, mut progress: impl FnMut(usize, usize)) -> Result<GridOutcome> {
    config.validate()?;
    let settings = TrainSettings {
        epochs: config.epochs,
        lr: config.lr,
        log_interval: config.log_interval,
        exec,
    };
    let cells = config.cells();
    let total = cells.len() * config.trials;
    // results[cell][model][trial]
    let mut results: Vec<Vec<Vec<TrialResult>>> = Vec::with_capacity(cells.len());
    let mut done = 0;
    for &(f, w) in &cells {
        let mut per_model: Vec<Vec<TrialResult>> = config.models.iter().map(|_| Vec::new()).collect();
        for trial in 0..config.trials {
            let dcfg = config.dataset_config(f, w, trial);
            match generate_dataset(&dcfg).and_then(PreparedDataset::new) {
                Ok(prepared) => {
                    let runs = map_indices(exec, config.models.len(), |m| {
                        let spec = &config.models[m];
                        run_trial(&prepared, spec, settings, init_seed(dcfg.seed, &spec.name))
                    });
                    for (slot, r) in per_model.iter_mut().zip(runs) {
                        slot.push(r.map_err(|e| (matches!(e, Error::NonFiniteLoss { .. }), e.to_string())));
                    }
                }
                Err(e) => {
                    let msg = format!("dataset: {e}");
                    for slot in &mut per_model {
                        slot.push(Err((false, msg.clone())));
                    }
                }
            }
            done += 1;
            progress(done, total);
        }
        results.push(per_model);
    }

    let mut out = GridOutcome::default();
    for (ci, per_model) in results.into_iter().enumerate() {
        for (mi, trials) in per_model.into_iter().enumerate() {
            for (trial, r) in trials.into_iter().enumerate() {
                match r {
                    Ok(recs) => out.records.extend(recs),
                    Err((non_finite, error)) => out.failures.push(TrialFailure {
                        cell: cells[ci],
                        model: config.models[mi].name.clone(),
                        trial,
                        error,
                        non_finite,
                    }),
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dense_eigenvalues, random_graph, seeded};
    use crate::sheaf::Edge;

    fn tiny(models: Vec<ModelSpec>) -> ExperimentConfig {
        ExperimentConfig {
            models,
            sigma_feat_sq: vec![0.0],
            sigma_w_sq: vec![0.0],
            trials: 1,
            nodes: 40,
            epochs: 25,
            ..ExperimentConfig::preset(Preset::Desk)
        }
    }

    #[test]
    fn model_names() {
        let names: Vec<_> = ModelSpec::defaults().into_iter().map(|m| m.name).collect();
        assert_eq!(names, ["SheafNN-32", "SheafNN-16", "GCN-32", "GCN-16"]);
        assert_eq!(ModelSpec::parse("sheafnn-16").unwrap(), ModelSpec::new(Architecture::SheafNn, 4, 16));
        assert_eq!(ModelSpec::parse("GCN-2x8").unwrap().name, "GCN-2x8");
        for bad in ["MLP-32", "GCN", "GCN-0x4", "GCN-axb"] {
            assert!(ModelSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn gcn_operator_examples() {
        let pos = build_gcn_operator(&Graph::new(2, vec![Edge::weighted(0, 1, 1.0)]).unwrap()).unwrap();
        assert_eq!(pos.to_dense(), Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap());
        let neg = build_gcn_operator(&Graph::new(2, vec![Edge::weighted(0, 1, -1.0)]).unwrap()).unwrap();
        assert_eq!(neg.to_dense(), pos.to_dense());
        assert!(matches!(build_gcn_operator(&Graph::new(3, vec![]).unwrap()), Err(Error::DegenerateGraph(_))));
        assert!(build_gcn_operator(&Graph::from_pairs(3, &[(0, 1)]).unwrap()).is_err());
    }

    #[test]
    fn gcn_operator_reassembles() {
        let mut rng = seeded(3);
        let g = random_graph(&mut rng, 12, 30);
        if !g.isolated_nodes().is_empty() {
            return;
        }
        let a = build_gcn_operator(&g).unwrap().to_dense();
        assert!(a.max_abs_diff(&a.transpose()) < 1e-14);
        let deg: Vec<f64> = g.weighted_degrees().iter().map(|d| d + 1.0).collect();
        // D̃^{1/2} Â D̃^{1/2} = |A| + I
        let back = Matrix::from_fn(12, 12, |i, j| a.get(i, j) * (deg[i] * deg[j]).sqrt());
        let mut target = g.adjacency().map(f64::abs);
        for i in 0..12 {
            target.set(i, i, 1.0);
        }
        assert!(back.max_abs_diff(&target) < 1e-12);
        let ev = dense_eigenvalues(&a);
        assert!(ev.iter().all(|l| l.abs() <= 1.0 + 1e-10));
    }

    #[test]
    fn accuracy_examples() {
        let labels = [0, 1, 1, 0];
        let mask = [0, 1, 2, 3];
        let perfect = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 2.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&perfect, &labels, &mask).unwrap(), 1.0);
        assert_eq!(accuracy(&perfect.scale(-1.0), &labels, &mask).unwrap(), 0.0);
        assert_eq!(accuracy(&Matrix::zeros(4, 2), &labels, &mask).unwrap(), 0.5);
        assert_eq!(accuracy(&Matrix::zeros(4, 2), &labels, &[0, 1, 3]).unwrap(), 2.0 / 3.0);
        assert!(matches!(accuracy(&perfect, &labels, &[]), Err(Error::EmptyMask)));
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(dataset_seed(7, 0), dataset_seed(7, 0));
        assert_ne!(dataset_seed(7, 0), dataset_seed(7, 1));
        assert_ne!(init_seed(1, "GCN-32"), init_seed(1, "GCN-16"));
        let mut cfg = tiny(ModelSpec::defaults());
        let before = cfg.dataset_config(0.0, 0.5, 3);
        cfg.models.truncate(1);
        cfg.sigma_w_sq.push(2.0);
        assert_eq!(cfg.dataset_config(0.0, 0.5, 3), before);
    }

    #[test]
    fn record_schedule_and_determinism() {
        let cfg = tiny(vec![ModelSpec::parse("SheafNN-2x8").unwrap()]);
        let prepared = PreparedDataset::new(generate_dataset(&cfg.dataset_config(0.0, 0.0, 0)).unwrap()).unwrap();
        let settings = TrainSettings { epochs: 25, lr: 0.01, log_interval: 10, exec: Execution::default() };
        let a = run_trial(&prepared, &cfg.models[0], settings, 5).unwrap();
        assert_eq!(a.iter().map(|r| r.epoch).collect::<Vec<_>>(), [0, 10, 20, 25]);
        let b = run_trial(&prepared, &cfg.models[0], settings, 5).unwrap();
        let strip = |v: &[MetricsRecord]| v.iter().map(|r| MetricsRecord { wall_ms: 0, ..r.clone() }).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert!(a.iter().all(|r| (0.0..=1.0).contains(&r.test_acc) && (0.0..=1.0).contains(&r.train_acc)));
        let zero = run_trial(&prepared, &cfg.models[0], TrainSettings { epochs: 0, ..settings }, 5).unwrap();
        assert_eq!(zero.len(), 1);
        assert_eq!(zero[0].train_loss, a[0].train_loss);
    }

    #[test]
    fn grid_pairs_models_on_one_dataset() {
        let cfg = tiny(vec![ModelSpec::parse("SheafNN-2x4").unwrap(), ModelSpec::parse("GCN-2x4").unwrap()]);
        let mut calls = 0;
        let out = run_grid(&cfg, Execution::default(), |_, _| calls += 1).unwrap();
        assert_eq!(calls, 1);
        assert!(out.failures.is_empty());
        assert_eq!(out.records.len(), 2 * 4);
        assert_eq!(out.records[0].model, "SheafNN-2x4");
        assert_eq!(out.records[4].model, "GCN-2x4");
        assert!(out.records.iter().all(|r| r.seed == out.records[0].seed));
        let summary = out.summary(&cfg);
        assert_eq!(summary.len(), 2);
        assert!(summary.iter().all(|s| s.n == 1 && s.std_test_acc == 0.0));
    }

    #[test]
    fn summary_uses_sample_std() {
        let cfg = ExperimentConfig { trials: 3, ..tiny(vec![ModelSpec::parse("GCN-1x2").unwrap()]) };
        let rec = |acc: f64, trial: u64| MetricsRecord {
            model: "GCN-1x2".into(),
            layers: 1,
            hidden: 2,
            feature_mode: FeatureMode::Linear,
            sigma_feat_sq: 0.0,
            sigma_w_sq: 0.0,
            seed: trial,
            epoch: 25,
            train_loss: 0.0,
            train_acc: 0.0,
            test_acc: acc,
            wall_ms: 0,
        };
        let out = GridOutcome { records: vec![rec(0.5, 0), rec(0.7, 1), rec(0.9, 2)], failures: vec![] };
        let s = &out.summary(&cfg)[0];
        assert_eq!(s.n, 3);
        assert!((s.mean_test_acc - 0.7).abs() < 1e-15);
        assert!((s.std_test_acc - 0.2).abs() < 1e-15);
        assert!(format_summary(&[s.clone()]).contains("0.7000 ± 0.2000"));
    }

    #[test]
    fn degenerate_cells_are_recorded() {
        let cfg = ExperimentConfig { nodes: 1, ..tiny(vec![ModelSpec::parse("GCN-1x2").unwrap()]) };
        assert!(cfg.validate().is_ok());
        let out = run_grid(&cfg, Execution::default(), |_, _| {}).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.failures.len(), 1);
        assert!(!out.failures[0].non_finite);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::preset(Preset::Paper).validate().is_ok());
        let base = tiny(ModelSpec::defaults());
        for bad in [
            ExperimentConfig { trials: 0, ..base.clone() },
            ExperimentConfig { sigma_w_sq: vec![], ..base.clone() },
            ExperimentConfig { models: vec![], ..base.clone() },
            ExperimentConfig { lr: 0.0, ..base.clone() },
            ExperimentConfig { sigma_feat_sq: vec![-1.0], ..base.clone() },
            ExperimentConfig { nodes: 0, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}
