use arbitext::synth::clustered_detections;
use arbitext::{lanms, standard_nms};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn bench_nms(c: &mut Criterion) {
    let mut group = c.benchmark_group("nms");
    for &n in &[1_000usize, 5_000, 20_000] {
        let dets = clustered_detections(n, 50, 9);
        group.bench_with_input(BenchmarkId::new("lanms", n), &dets, |b, dets| {
            b.iter(|| lanms(black_box(dets), 0.5, 0.5))
        });
        if n <= 5_000 {
            group.bench_with_input(BenchmarkId::new("standard", n), &dets, |b, dets| {
                b.iter(|| standard_nms(black_box(dets), 0.5))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_nms);
criterion_main!(benches);
