use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use slsrate_bench::{fast_setup, slow_setup, workload};
use slsrate_core::harness::{run_closed_loop, RunOptions, TraceDetail};
use slsrate_core::linalg::{expm, Matrix};
use slsrate_core::BallQuantizer;

fn bench_expm(c: &mut Criterion) {
    let a = Matrix::from_rows(&[vec![0.1, 1.0, 0.0, 0.3], vec![-1.0, 0.1, 0.2, 0.0], vec![0.0, 0.0, -0.5, 1.0], vec![0.0, 0.0, -1.0, -0.5]])
        .unwrap();
    c.bench_function("expm_4x4", |b| b.iter(|| expm(black_box(&a)).unwrap()));
}

fn bench_quantize(c: &mut Criterion) {
    let q = BallQuantizer::build(2, 0.05).unwrap();
    let pts: Vec<[f64; 2]> = (0..256)
        .map(|i| {
            let t = i as f64 * 0.7;
            let r = (i % 17) as f64 / 16.0;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    c.bench_function("quantize_d2_alpha005", |b| {
        b.iter(|| {
            for p in &pts {
                black_box(q.quantize(black_box(p)).unwrap());
            }
        })
    });
}

fn bench_closed_loop(c: &mut Criterion) {
    let mut g = c.benchmark_group("closed_loop_40s");
    g.sample_size(10);
    for (name, setup) in [("slow", slow_setup()), ("fast", fast_setup())] {
        let (sig, x0) = workload(&setup, 40.0, 1);
        for (label, detail) in [("full", TraceDetail::Full), ("blocks", TraceDetail::Blocks)] {
            let opts = RunOptions { detail, ..Default::default() };
            g.bench_function(format!("{name}_{label}"), |b| {
                b.iter(|| run_closed_loop(&setup, &sig, black_box(&x0), &opts).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, bench_expm, bench_quantize, bench_closed_loop);
criterion_main!(benches);
