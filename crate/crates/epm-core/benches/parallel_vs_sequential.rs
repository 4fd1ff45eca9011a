//! Wall-time comparison of the rayon batch layer against its sequential
//! fallback. Per-solve Newton iterations are inherently serial, so the
//! parallel win shows up across independent work items: whole-corpus solve
//! batches and derivative-check sweeps over many sample points.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use epm_core::batch::{fd_sweep, fd_sweep_seq, solve_all, solve_all_seq};
use epm_core::{
    builtin_by_name, builtin_corpus, sample_in_domain, Center, EdfParams, EpmConfig,
    ProblemInstance, SamplePlan,
};

/// Corpus replicated across several outer-parameter choices, so the batch is
/// wide enough for the thread pool to matter.
fn solve_batch(copies: usize) -> Vec<(ProblemInstance, EpmConfig)> {
    let mut items = Vec::new();
    for i in 0..copies {
        for p in builtin_corpus() {
            let mut cfg = EpmConfig::for_problem(&p);
            cfg.k = 5.0 * (i + 1) as f64;
            items.push((p, cfg));
        }
    }
    items
}

fn bench_solve_batches(c: &mut Criterion) {
    let mut group = c.benchmark_group("corpus_solves");
    group.sample_size(10);
    for copies in [2usize, 6] {
        let items = solve_batch(copies);
        group.bench_with_input(
            BenchmarkId::new("parallel", items.len()),
            &items,
            |b, items| b.iter(|| solve_all(items)),
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", items.len()),
            &items,
            |b, items| b.iter(|| solve_all_seq(items)),
        );
    }
    group.finish();
}

fn bench_fd_sweeps(c: &mut Criterion) {
    let p = builtin_by_name("qp5d").expect("builtin corpus entry");
    let y = p.interior_point().expect("corpus ships interior points").clone();
    let center = Center::new(&p, y, 1e-8).expect("interior point is strictly feasible");
    let params = EdfParams::ones(10.0, p.m()).expect("positive multipliers");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points = sample_in_domain(&p, &center, 48, &mut rng, &SamplePlan::default())
        .expect("sampler finds interior points");

    let mut group = c.benchmark_group("fd_sweep_qp5d");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| fd_sweep(&p, &center, &params, &points).expect("all probes in domain"))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| fd_sweep_seq(&p, &center, &params, &points).expect("all probes in domain"))
    });
    group.finish();
}

criterion_group!(benches, bench_solve_batches, bench_fd_sweeps);
criterion_main!(benches);
