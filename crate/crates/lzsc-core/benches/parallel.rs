//! Sequential-vs-parallel benchmarks for the data-parallel hot paths:
//! the convolution substrate, a full LZSC block, FNet inference, and one
//! stage-II training step.
//!
//! The `seq` variants call the always-sequential entry points; `par`
//! variants run inside a multi-thread rayon pool (the default). Build
//! with `--no-default-features` to benchmark the fully sequential
//! fallback build of everything else.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lzsc_core::autodiff::{register_fnet, ParamRegistry};
use lzsc_core::fnet::{fnet_forward, FNetParams};
use lzsc_core::lzsc::{init_kernel, lzsc_forward, LzscBlockParams, NetworkScale};
use lzsc_core::synth::synthetic_dataset;
use lzsc_core::tensor::{conv2d_grad_weights, conv2d_same, conv2d_same_seq, Tensor};
use lzsc_core::train::stage2_eval;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn single_thread_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

fn bench_conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("conv2d_same");
    for size in [64usize, 256] {
        let input = Tensor::from_fn(size, size, 8, |_, _, _| rng.gen_range(-1.0..1.0));
        let kernel = init_kernel(8, 8, 5, &mut rng);
        group.bench_with_input(BenchmarkId::new("seq", size), &size, |b, _| {
            b.iter(|| conv2d_same_seq(black_box(&input), black_box(&kernel)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("par", size), &size, |b, _| {
            b.iter(|| conv2d_same(black_box(&input), black_box(&kernel)).unwrap())
        });
    }
    group.finish();
}

fn bench_grad_weights(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("conv2d_grad_weights");
    for size in [64usize, 256] {
        let input = Tensor::from_fn(size, size, 8, |_, _, _| rng.gen_range(-1.0..1.0));
        let grad = Tensor::from_fn(size, size, 8, |_, _, _| rng.gen_range(-1.0..1.0));
        let pool = single_thread_pool();
        group.bench_with_input(BenchmarkId::new("pool1", size), &size, |b, _| {
            b.iter(|| {
                pool.install(|| {
                    conv2d_grad_weights(black_box(&input), black_box(&grad), (8, 8, 5, 5)).unwrap()
                })
            })
        });
        group.bench_with_input(BenchmarkId::new("poolN", size), &size, |b, _| {
            b.iter(|| conv2d_grad_weights(black_box(&input), black_box(&grad), (8, 8, 5, 5)).unwrap())
        });
    }
    group.finish();
}

fn bench_lzsc_block(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let block = LzscBlockParams::init(1, &NetworkScale::desk(), &mut rng);
    let input = Tensor::from_fn(128, 128, 1, |_, _, _| rng.gen_range(0.0..1.0));
    let pool = single_thread_pool();
    let mut group = c.benchmark_group("lzsc_forward_128");
    group.bench_function("pool1", |b| {
        b.iter(|| pool.install(|| lzsc_forward(black_box(&input), black_box(&block)).unwrap()))
    });
    group.bench_function("poolN", |b| {
        b.iter(|| lzsc_forward(black_box(&input), black_box(&block)).unwrap())
    });
    group.finish();
}

fn bench_fnet(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fnet = FNetParams::init(&NetworkScale::desk(), &mut rng);
    let i1 = Tensor::from_fn(128, 128, 1, |_, _, _| rng.gen_range(0.0..1.0));
    let i2 = Tensor::from_fn(128, 128, 1, |_, _, _| rng.gen_range(0.0..1.0));
    let pool = single_thread_pool();
    let mut group = c.benchmark_group("fnet_forward_128");
    group.bench_function("pool1", |b| {
        b.iter(|| {
            pool.install(|| fnet_forward(black_box(&i1), black_box(&i2), &fnet, false).unwrap())
        })
    });
    group.bench_function("poolN", |b| {
        b.iter(|| fnet_forward(black_box(&i1), black_box(&i2), &fnet, false).unwrap())
    });
    group.finish();
}

fn bench_train_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fnet = FNetParams::init(&NetworkScale::desk(), &mut rng);
    let mut reg = ParamRegistry::new();
    let fids = register_fnet(&mut reg, &fnet);
    let data = synthetic_dataset(4, 32, 6);
    let (i1, i2) = data.get(0);
    let pool = single_thread_pool();
    let mut group = c.benchmark_group("stage2_fwd_bwd_32");
    group.sample_size(20);
    group.bench_function("pool1", |b| {
        b.iter(|| {
            pool.install(|| {
                stage2_eval(&reg, &fids, black_box(i1), black_box(i2), (20.0, 20.0, 15.0), true)
                    .unwrap()
            })
        })
    });
    group.bench_function("poolN", |b| {
        b.iter(|| {
            stage2_eval(&reg, &fids, black_box(i1), black_box(i2), (20.0, 20.0, 15.0), true).unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_conv,
    bench_grad_weights,
    bench_lzsc_block,
    bench_fnet,
    bench_train_step
);
criterion_main!(benches);
