use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use immunorec::affinity::{kendalls_tau, pearson_baseline, weighted_kappa};
use immunorec::datastore::{generate_synthetic, partition, IngestConfig, SyntheticConfig};
use immunorec::domain::Dataset;
use immunorec::evaluation::{
    accuracy_experiment, sample_users, ties_experiment, AccuracySettings, Predictor,
};
use immunorec::{run_to_convergence, AffinityMeasure, Execution, ImmuneParams};

fn fixture() -> Dataset {
    generate_synthetic(&SyntheticConfig::default()).unwrap()
}

fn modes() -> Vec<(&'static str, Execution)> {
    let mut modes = vec![("sequential", Execution::Sequential)];
    if cfg!(feature = "parallel") {
        modes.push(("parallel", Execution::Parallel { jobs: None }));
    }
    modes
}

fn kernels(c: &mut Criterion) {
    let data = fixture();
    let (a, b) = (data.get(1).unwrap(), data.get(5).unwrap());
    let mut g = c.benchmark_group("affinity");
    g.bench_function("weighted_kappa", |bench| {
        bench.iter(|| weighted_kappa(black_box(a), black_box(b)))
    });
    g.bench_function("kendalls_tau", |bench| {
        bench.iter(|| kendalls_tau(black_box(a), black_box(b)))
    });
    g.bench_function("pearson", |bench| {
        bench.iter(|| pearson_baseline(black_box(a), black_box(b)))
    });
    g.finish();
}

fn single_run(c: &mut Criterion) {
    let data = fixture();
    let params = ImmuneParams::default();
    let mut g = c.benchmark_group("run_to_convergence");
    g.sample_size(20);
    for measure in [
        AffinityMeasure::weighted_kappa(),
        AffinityMeasure::kendalls_tau(),
    ] {
        g.bench_function(measure.kind.short_name(), |bench| {
            bench.iter(|| {
                run_to_convergence(data.get(1).unwrap(), &data, &measure, &params, 42).unwrap()
            })
        });
    }
    g.finish();
}

fn experiments(c: &mut Criterion) {
    let data = fixture();
    let parts = partition(&data, &IngestConfig::default(), 42).unwrap();
    let settings = AccuracySettings {
        trials: 5,
        ..Default::default()
    };
    let predictor = Predictor::Network {
        measure: AffinityMeasure::weighted_kappa(),
    };
    let sample = Dataset::from_profiles(
        sample_users(&data, 100, 42, |_| true)
            .unwrap()
            .into_iter()
            .cloned(),
    )
    .unwrap();

    let mut g = c.benchmark_group("experiment");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_with_input(
            BenchmarkId::new("accuracy_8x5", name),
            &exec,
            |bench, &exec| {
                bench.iter(|| {
                    accuracy_experiment(
                        &parts.antigens,
                        &parts.pool,
                        &predictor,
                        &settings,
                        8,
                        42,
                        exec,
                    )
                    .unwrap()
                })
            },
        );
        g.bench_with_input(
            BenchmarkId::new("ties_100x30", name),
            &exec,
            |bench, &exec| bench.iter(|| ties_experiment(&sample, &data, 30, 42, exec).unwrap()),
        );
    }
    g.finish();
}

criterion_group!(benches, kernels, single_run, experiments);
criterion_main!(benches);
