//! Sequential against rayon execution for the batch workloads: σ sweeps and
//! consistent-model sampling. Without the `parallel` feature both variants
//! run on the calling thread.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use delaylqr::data::{
    collect_data, compute_psi, make_sigma_phi, sample_consistent_models, DataSet, InputSignal,
};
use delaylqr::synthesis::{sweep_sigma, LmiSettings};
use delaylqr::{CostWeights, DelayPlant, Execution, Mat, Vector};

fn paper_data() -> DataSet {
    let plant = DelayPlant::new(
        Mat::from_row_slice(2, 2, &[1.3, 0.5, 0.0, 1.2]),
        Mat::from_row_slice(2, 1, &[1.0, 1.0]),
        4,
    )
    .unwrap();
    let signal = InputSignal::Sinusoid {
        amplitude: 5.0,
        rate: 10.0,
    };
    let cov = Mat::identity(2, 2) * 1e-2;
    collect_data(&plant, &Vector::zeros(2), None, &signal, 10, Some(&cov), 6)
        .unwrap()
        .1
}

fn modes() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ]
}

fn sweep(c: &mut Criterion) {
    let data = paper_data();
    let weights = CostWeights::uniform(2, 1, 4, 1e-4, 1e-4, 3e-4).unwrap();
    let grid: Vec<f64> = (0..8).map(|i| 0.09 + 0.007 * i as f64).collect();
    let settings = LmiSettings::default();
    let mut group = c.benchmark_group("sweep_8_points");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sweep_sigma(&data, &weights, &grid, &settings, exec).unwrap())
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let data = paper_data();
    let psi = compute_psi(&data, &make_sigma_phi(0.12, 2, 10).unwrap()).unwrap();
    let mut group = c.benchmark_group("sample_2000_models");
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sample_consistent_models(&psi, 2000, 1, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, sampling);
criterion_main!(benches);
