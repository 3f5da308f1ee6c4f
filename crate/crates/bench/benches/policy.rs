use blp_core::data::DatasetSpec;
use blp_core::harness::{prepare, run_single, AlgoConfig, ExperimentConfig};
use blp_core::plot::PlotConfig;
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_plot_rounds(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::new(
        DatasetSpec::SyntheticLogistic {
            d: 2,
            tau: 0.2,
            lipschitz: 2.0,
        },
        AlgoConfig::Plot(PlotConfig::experimental(0.1, 8)),
    );
    cfg.horizon = 50;
    cfg.seeds = 1;
    let prep = prepare(&cfg).unwrap();
    let mut group = c.benchmark_group("plot");
    group.sample_size(10);
    group.bench_function("50 rounds batch 8 synthetic", |b| b.iter(|| run_single(&cfg, &prep, 0).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_plot_rounds);
criterion_main!(benches);
