//! Benchmarks for the three hot paths: geometric partitioning, attention
//! pooling, and similarity-based label assignment.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use autovoc_bench::{bench_assignment, bench_batch, bench_cloud};
use autovoc_core::geometry::{pillar_masks, sector_masks};
use autovoc_core::segmenter::assign_labels;
use autovoc_core::smap::smap_forward;

fn partitioning(c: &mut Criterion) {
    let mut group = c.benchmark_group("partitioning");
    for n in [10_000usize, 100_000] {
        let cloud = bench_cloud(n, 42);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(
            BenchmarkId::new("sector_masks_t12", n),
            &cloud,
            |b, cloud| b.iter(|| sector_masks(cloud, 12).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("pillar_masks_s0.5", n),
            &cloud,
            |b, cloud| b.iter(|| pillar_masks(cloud, 0.5).unwrap()),
        );
    }
    group.finish();
}

fn attention_pooling(c: &mut Criterion) {
    let mut group = c.benchmark_group("attention_pooling");
    for (n, t) in [(1_024usize, 12usize), (4_096, 12), (4_096, 24)] {
        let (batch, params) = bench_batch(n, t, 64, 4, 7);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(
            BenchmarkId::new("smap_forward_c64_h4", format!("n{n}_t{t}")),
            &(batch, params),
            |b, (batch, params)| b.iter(|| smap_forward(batch, params).unwrap()),
        );
    }
    group.finish();
}

fn label_assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("label_assignment");
    for (n, m) in [(10_000usize, 16usize), (100_000, 16), (100_000, 64)] {
        let (feats, text, vocab) = bench_assignment(n, m, 64, 11);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(
            BenchmarkId::new("assign_labels_c64", format!("n{n}_m{m}")),
            &(feats, text, vocab),
            |b, (feats, text, vocab)| b.iter(|| assign_labels(feats, None, text, vocab).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, partitioning, attention_pooling, label_assignment);
criterion_main!(benches);
