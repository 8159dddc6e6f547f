use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use maskdiff_bench::{synthetic, views};
use maskdiff_core::kernel::{np_predict, KernelOptions, KernelReference};
use maskdiff_core::metrics::{pr_auc, roc_auc, LabeledScores};
use maskdiff_core::model::{Model, ModelConfig};
use maskdiff_core::probe::ProbeConfig;
use maskdiff_core::scorer::{score_sample, ReconstructionEstimator};

fn kernel(c: &mut Criterion) {
    let b = synthetic(4000, 10);
    let reference = KernelReference::from_options(&b.train, &KernelOptions::default()).unwrap();
    let probe = ProbeConfig::nonparametric_default();
    let x = b.test.row(0);
    let view = views(x, &probe).into_iter().find(|v| !v.masked.is_empty()).unwrap();
    let j = view.masked[0];
    c.bench_function("np_predict/4000x40", |bch| {
        bch.iter(|| np_predict(black_box(&reference), black_box(&view), j).unwrap())
    });
    c.bench_function("np_score_sample/4000x40/32 views", |bch| {
        bch.iter(|| score_sample(black_box(x), 0, &probe, &reference).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let b = synthetic(10, 10);
    let probe = ProbeConfig::parametric_default();
    let model = Model::new(ModelConfig::default(), &b.train.cardinalities(), probe.n_levels()).unwrap();
    let x = b.test.row(0);
    let all = views(x, &probe);
    let refs: Vec<_> = all.iter().collect();
    c.bench_function("net_forward/144 views", |bch| {
        bch.iter(|| model.predict_views(black_box(&refs)).unwrap())
    });
    c.bench_function("pm_score_sample/144 views", |bch| {
        bch.iter(|| score_sample(black_box(x), 0, &probe, &model).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let n = 10_000;
    // Coarse scores give plenty of ties.
    let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 10.0).collect();
    let labels: Vec<u8> = (0..n).map(|i| u8::from((i * 31) % 10 == 0)).collect();
    let ls = LabeledScores::new(scores, labels).unwrap();
    c.bench_function("roc_auc/10k", |bch| bch.iter(|| roc_auc(black_box(&ls)).unwrap()));
    c.bench_function("pr_auc/10k", |bch| bch.iter(|| pr_auc(black_box(&ls)).unwrap()));
}

criterion_group!(benches, kernel, network, metrics);
criterion_main!(benches);
