//! Throughput of the data-parallel core under both execution policies.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use qpon_core::harness::NetworkSimulator;
use qpon_core::security::CovAccumulator;
use qpon_core::{Execution, ScenarioConfig};

fn scenario() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("table1_4qnu").expect("bundled preset");
    cfg.frames.samples = 200_000;
    cfg.frames.count = 25;
    cfg
}

fn signal_slot(c: &mut Criterion) {
    let cfg = scenario();
    let sim = NetworkSimulator::new(&cfg);
    let mut g = c.benchmark_group("signal_slot");
    g.throughput(Throughput::Elements(cfg.frames.samples as u64));
    g.sample_size(10);
    for mode in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| m.install(|| black_box(sim.signal_slot(0).expect("slot"))))
        });
    }
    g.finish();
}

fn covariance(c: &mut Criterion) {
    let cfg = scenario();
    let slot = NetworkSimulator::new(&cfg).signal_slot(0).expect("slot");
    let mut streams: Vec<&[num_complex::Complex64]> = vec![&slot.reference];
    streams.extend(slot.raw.iter().map(|r| r.as_slice()));
    let mut g = c.benchmark_group("covariance");
    g.throughput(Throughput::Elements(cfg.frames.samples as u64));
    for mode in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| {
                m.install(|| {
                    let mut acc = CovAccumulator::for_modes(streams.len());
                    acc.add_streams(&streams).expect("equal lengths");
                    black_box(acc.count())
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, signal_slot, covariance);
criterion_main!(benches);
