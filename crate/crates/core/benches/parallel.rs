//! Default rayon pool against a single-thread pool on the hot kernels.
//! Build with `--no-default-features` to time the rayon-free fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gala::fitting::RefineConfig;
use gala::grid::{extract_grids, ExtractionConfig};
use gala::par;
use gala::pipeline::{fit, held_out_batch, FitConfig};
use gala::reconstruct::sample_volume;
use gala::{shapes, Hyperparameters};

fn setup() -> gala::pipeline::Fitted {
    let cfg = FitConfig {
        hyper: Hyperparameters {
            n_roots: 64,
            ..Hyperparameters::default()
        },
        refine: RefineConfig {
            iterations: 0,
            batch_size: 4096,
            ..RefineConfig::default()
        },
        ..FitConfig::default()
    };
    fit(&shapes::torus(0.25, 0.08, 48, 24), &cfg).expect("fit")
}

fn kernels(c: &mut Criterion) {
    let fitted = setup();
    let batch = held_out_batch(
        &fitted.oracle,
        &fitted.samples,
        &RefineConfig {
            batch_size: 4096,
            ..RefineConfig::default()
        },
    )
    .expect("batch");
    let extraction =
        ExtractionConfig::new(fitted.rep.hyperparameters().mode, fitted.rep.resolution());
    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (label, threads) in [("default", None), ("single", Some(1usize))] {
        // The pool is built once per measurement, outside the timed loop.
        let pooled = |f: &mut (dyn FnMut() + Send)| match threads {
            None => f(),
            Some(n) => par::with_threads(n, f),
        };
        group.bench_function(BenchmarkId::new("sample_volume_64", label), |b| {
            pooled(&mut || b.iter(|| sample_volume(&fitted.rep, 64).unwrap()))
        });
        group.bench_function(BenchmarkId::new("loss_and_grad_4096", label), |b| {
            pooled(&mut || b.iter(|| fitted.rep.loss_and_grad(&batch).unwrap()))
        });
        group.bench_function(BenchmarkId::new("extract_grids", label), |b| {
            pooled(&mut || {
                b.iter(|| extract_grids(fitted.rep.forest(), &fitted.samples, &extraction).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
