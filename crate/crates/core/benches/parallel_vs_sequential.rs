//! Data-parallel paths on a one-thread pool versus the default pool. Built
//! without the `parallel` feature both arms run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fwin_core::attention::{window_self_attention, AttentionConfig, ProjectionSet};
use fwin_core::data::synthetic::{lagged_driver_frame, DriverTask};
use fwin_core::data::{prepare, NormScope, WindowSample, WindowShape};
use fwin_core::model::{FWin, FWinConfig, Task};
use fwin_core::training::evaluate;
use fwin_core::{par, ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POOLS: [(&str, Option<usize>); 2] = [("sequential", Some(1)), ("parallel", None)];

fn setup() -> (FWin, Vec<WindowSample>) {
    let frame = lagged_driver_frame(DriverTask { weeks: 400, ..Default::default() }).unwrap();
    let cfg = FWinConfig {
        d_model: 32,
        d_ff: 64,
        horizon: 24,
        in_features: 4,
        task: Task::Mm,
        ..FWinConfig::shrunken()
    };
    let shape = WindowShape { seq_len: cfg.seq_len, horizon: cfg.horizon, label_len: cfg.label_len };
    let p = prepare(&frame, NormScope::Full, Task::Mm, shape).unwrap();
    let batch = p.samples.train.into_iter().take(32).collect();
    (FWin::new(cfg, 0).unwrap(), batch)
}

fn batch_gradients(c: &mut Criterion) {
    let (model, batch) = setup();
    let mut group = c.benchmark_group("batch_gradients");
    for (name, threads) in POOLS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    par::map(&batch, |s| model.sample_gradients(s, Some(7)).unwrap().0)
                })
            })
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let (model, batch) = setup();
    let mut group = c.benchmark_group("evaluate");
    for (name, threads) in POOLS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(threads, || evaluate(&model, black_box(&batch)).unwrap()))
        });
    }
    group.finish();
}

fn window_attention(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let proj = ProjectionSet::new(&mut store, "attn", 64, &mut rng).unwrap();
    let cfg = AttentionConfig {
        d_model: 64,
        n_heads: 8,
        window: 12,
        dropout: 0.0,
        ..Default::default()
    };
    let inputs: Vec<Tensor> = (0..16)
        .map(|_| Tensor::new(&[256, 64], (0..256 * 64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let mut group = c.benchmark_group("window_attention_x16");
    for (name, threads) in POOLS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    par::map(&inputs, |x| {
                        let mut tape = Tape::with_params(&store);
                        let v = tape.input(x.clone());
                        let y = window_self_attention(&mut tape, &proj, v, &cfg).unwrap();
                        tape.value(y).sum()
                    })
                })
            })
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = batch_gradients, evaluation, window_attention
}
criterion_main!(benches);
