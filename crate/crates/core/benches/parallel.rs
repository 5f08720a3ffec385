//! One worker versus the default pool on the two data-parallel hot paths:
//! the filter (one neighbor query per training row) and kNN prediction (one
//! scan of the training set per query). Built without the `parallel`
//! feature, both variants run the sequential fallback.

use std::hint::black_box;
use std::sync::atomic::AtomicUsize;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nnqf::baselines::KnnqrModel;
use nnqf::evaluation::{prepare_training, PipelineConfig, PreparedTraining};
use nnqf::nnqf::apply_filter;
use nnqf::par::{current_threads, with_jobs};
use nnqf::synth::{generate, Generator, SyntheticSpec};

fn training() -> (PreparedTraining, PipelineConfig) {
    let d = generate(&SyntheticSpec::new(Generator::HouseholdLoadLike, 4_000, 1)).unwrap();
    let cfg = PipelineConfig::new(d.embedding.clone());
    let data = prepare_training(&d.table, 0..d.split, d.split, &cfg).unwrap();
    (data, cfg)
}

fn pools() -> [(&'static str, usize); 2] {
    [("sequential", 1), ("pool", 0)]
}

fn filter(c: &mut Criterion) {
    let (data, cfg) = training();
    let dm = data.design_matrix().unwrap();
    let nn = data.nnqf_config(&cfg, 100);
    let mut g = c.benchmark_group(format!("apply_filter/{}rows/{}threads", dm.n_rows(), current_threads()));
    g.sample_size(20);
    for (name, jobs) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_jobs(jobs, || black_box(apply_filter(&dm, &nn).unwrap())))
        });
    }
    g.finish();
}

fn knnqr(c: &mut Criterion) {
    let (data, cfg) = training();
    let model = KnnqrModel::fit(data.x.clone(), data.y.clone(), 50, data.weights.clone(), cfg.levels.clone()).unwrap();
    let queries = data.x.select_rows(&(0..500).collect::<Vec<_>>());
    let mut g = c.benchmark_group(format!("knnqr_predict/500queries/{}threads", current_threads()));
    g.sample_size(20);
    for (name, jobs) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let visits = AtomicUsize::new(0);
                with_jobs(jobs, || black_box(model.predict_matrix_counted(&queries, &visits).unwrap()))
            })
        });
    }
    g.finish();
}

criterion_group!(benches, filter, knnqr);
criterion_main!(benches);
