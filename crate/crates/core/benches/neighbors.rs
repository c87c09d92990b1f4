//! Neighbour pass and all-property NR-Prec, one worker vs the full pool.
//!
//! Build with `--no-default-features` to measure the sequential fallback
//! without rayon at all.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dmlprobe::retrieval::{nr_precision_all, RetrievalOptions};
use dmlprobe::synth::{sample_manifest, synth_embed};
use dmlprobe::{blocked_neighbor_pass, par, EmbeddingSet, PropertyTable};

fn fixture(n: usize) -> (EmbeddingSet, PropertyTable) {
    let manifest = sample_manifest(n, 1).unwrap();
    let weights = [("car_model".to_string(), 1.0), ("car_hue".to_string(), 0.5)].into();
    let set = synth_embed(&manifest, &weights, 64, 0.5, 2).unwrap();
    (set, manifest.to_property_table())
}

fn workers() -> Vec<(&'static str, Option<usize>)> {
    let mut w = vec![("1-thread", Some(1))];
    if par::current_threads() > 1 {
        w.push(("pool", None));
    }
    w
}

fn neighbor_pass(c: &mut Criterion) {
    let mut group = c.benchmark_group("blocked_neighbor_pass");
    group.sample_size(10);
    for n in [1000, 4000] {
        let (set, _) = fixture(n);
        for (label, threads) in workers() {
            group.bench_with_input(BenchmarkId::new(label, n), &set, |b, set| {
                b.iter(|| par::with_threads(threads, || blocked_neighbor_pass(black_box(set), 50, 128).unwrap()))
            });
        }
    }
    group.finish();
}

fn all_properties(c: &mut Criterion) {
    let mut group = c.benchmark_group("nr_precision_all");
    group.sample_size(10);
    let opts = RetrievalOptions::default();
    for n in [1000, 4000] {
        let (set, table) = fixture(n);
        for (label, threads) in workers() {
            group.bench_with_input(BenchmarkId::new(label, n), &(&set, &table), |b, (set, table)| {
                b.iter(|| par::with_threads(threads, || nr_precision_all(black_box(set), table, &opts).unwrap()))
            });
        }
    }
    group.finish();
}

fn block_sizes(c: &mut Criterion) {
    let mut group = c.benchmark_group("block_size");
    group.sample_size(10);
    let (set, _) = fixture(4000);
    for block in [32, 128, 512] {
        group.bench_with_input(BenchmarkId::from_parameter(block), &block, |b, &block| {
            b.iter(|| blocked_neighbor_pass(black_box(&set), 50, block).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, neighbor_pass, all_properties, block_sizes);
criterion_main!(benches);
