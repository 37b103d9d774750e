use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sheaflab_core::harness::{ModelSpec, PreparedDataset};
use sheaflab_core::neural::{AdamConfig, AdamState};
use sheaflab_core::synth::{generate_dataset, DegreeMode, SyntheticConfig};
use sheaflab_core::{Execution, Matrix};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn prepared() -> PreparedDataset {
    let cfg = SyntheticConfig {
        num_nodes: 500,
        degree_mode: DegreeMode::Weighted,
        seed: 3,
        ..SyntheticConfig::default()
    };
    PreparedDataset::new(generate_dataset(&cfg).expect("dataset")).expect("operators")
}

fn kernels(c: &mut Criterion) {
    let p = prepared();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, p.data.num_nodes(), 32);
    let w = random(&mut rng, 32, 32);

    let mut g = c.benchmark_group("sparse_apply");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| p.sheaf_diffusion.apply_with(&x, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("dense_matmul");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| x.matmul_with(&w, exec).unwrap()));
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let p = prepared();
    let mut g = c.benchmark_group("train_epoch");
    g.sample_size(20);
    for spec in ["SheafNN-32", "GCN-32"] {
        let spec = ModelSpec::parse(spec).unwrap();
        for (name, exec) in MODES {
            let mut model = p.build_model(&spec, 11).unwrap();
            model.set_execution(exec);
            let mut adam = AdamState::new(AdamConfig::with_lr(1e-3));
            g.bench_function(BenchmarkId::new(&spec.name, name), |b| {
                b.iter(|| {
                    model
                        .train_step(&p.data.features, &p.data.labels, &p.data.train_idx, &mut adam)
                        .unwrap()
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, kernels, training);
criterion_main!(benches);
