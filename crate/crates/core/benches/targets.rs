//! Target building and loss evaluation throughput. Run with
//! `--no-default-features` to time the sequential fallback against the
//! default rayon path.

use arbitext::loss::{loss_gradient, total_loss};
use arbitext::synth::scene;
use arbitext::target::{build_targets, GtBox, PyramidSpec};
use arbitext::PredictionGrid;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn scenes_gt(n: usize) -> Vec<Vec<GtBox>> {
    let pyramid = PyramidSpec::default();
    (0..n)
        .map(|i| {
            scene(11, i as u64, &pyramid, 384.0)
                .boxes
                .into_iter()
                .map(|rbox| GtBox { rbox, ignore: false })
                .collect()
        })
        .collect()
}

fn bench_targets(c: &mut Criterion) {
    let pyramid = PyramidSpec::default();
    let mut group = c.benchmark_group("build_targets");
    for &n in &[1usize, 8, 32] {
        let scenes = scenes_gt(n);
        group.bench_with_input(BenchmarkId::new("scenes", n), &scenes, |b, scenes| {
            b.iter(|| {
                for gt in scenes {
                    black_box(build_targets(black_box(gt), &pyramid, 384.0));
                }
            })
        });
    }
    group.finish();
}

fn bench_loss(c: &mut Criterion) {
    let pyramid = PyramidSpec::default();
    let gt = scenes_gt(1).pop().unwrap();
    let labels = build_targets(&gt, &pyramid, 384.0);
    let preds: Vec<PredictionGrid> = labels
        .iter()
        .map(|l| PredictionGrid::from_labels(l, 5.0))
        .collect();
    c.bench_function("total_loss", |b| {
        b.iter(|| total_loss(black_box(&preds), black_box(&labels), 1.0, 1.0).unwrap())
    });
    c.bench_function("loss_gradient", |b| {
        b.iter(|| loss_gradient(black_box(&preds), black_box(&labels), 1.0, 1.0).unwrap())
    });
}

criterion_group!(benches, bench_targets, bench_loss);
criterion_main!(benches);
