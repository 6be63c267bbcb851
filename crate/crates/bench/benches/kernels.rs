use std::hint::black_box;

use cemlab_core::diffusion::{backward_sample, TrainingBatch};
use cemlab_core::distributions::{five_point_cloud, sample_data, twenty_point_cloud};
use cemlab_core::nn::init_mlp;
use cemlab_core::oracle::{oracle_f_pointcloud, Oracle};
use cemlab_core::rng::{stream, stream_rng};
use cemlab_core::schedule::build_exp_schedule;
use cemlab_core::{DataDistribution, LambdaChoice, TargetKind};
use criterion::{criterion_group, criterion_main, Criterion};

fn loss_grad(c: &mut Criterion) {
    let model = init_mlp(&[3, 16, 16, 2], 0).unwrap();
    let schedule = build_exp_schedule(0.01, 10.0, 200).unwrap();
    let x0 = sample_data(&DataDistribution::LineGaussian, 1000, 0).unwrap();
    let mut rng = stream_rng(0, stream::NOISE);
    let batch =
        TrainingBatch::generate(x0, &schedule, TargetKind::CondExpF, LambdaChoice::Default, &mut rng).unwrap();
    let inputs = batch.inputs();
    c.bench_function("loss_grad 2x16 batch 1000", |b| {
        b.iter(|| model.loss_grad(black_box(&inputs), &batch.target, &batch.weight).unwrap())
    });
}

fn oracle_f(c: &mut Criterion) {
    let cloud = twenty_point_cloud();
    c.bench_function("oracle f, 20 points", |b| {
        b.iter(|| oracle_f_pointcloud(&cloud, black_box(&[0.3, -1.2]), black_box(0.05)).unwrap())
    });
}

fn sampler(c: &mut Criterion) {
    let oracle = Oracle::PointCloud(five_point_cloud());
    let schedule = build_exp_schedule(0.01, 10.0, 200).unwrap();
    let mut g = c.benchmark_group("backward sampler");
    g.sample_size(10);
    g.bench_function("five points, K=200, n=1000", |b| {
        b.iter(|| backward_sample(&oracle, &schedule, 1000, black_box(1)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, loss_grad, oracle_f, sampler);
criterion_main!(benches);
