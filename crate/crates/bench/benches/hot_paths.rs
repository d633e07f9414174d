use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sphflow_bench::{dam_break, lattice};
use sphflow_core::case::Dimensionality;
use sphflow_core::sph::{KernelSpec, NeighborGrid, SolverState};
use sphflow_core::{emit_case, parse_case};

fn neighbors(c: &mut Criterion) {
    let mut g = c.benchmark_group("neighbor_grid");
    for n in [500, 2000, 8000] {
        let pts = lattice(n, 0.02);
        g.bench_with_input(BenchmarkId::new("build_and_query", n), &pts, |b, pts| {
            b.iter(|| {
                let grid = NeighborGrid::build(pts, 0.048);
                let mut count = 0;
                for i in 0..pts.len() {
                    count += grid.neighbors_of(pts, i, 0.048).len();
                }
                black_box(count)
            })
        });
    }
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let k = KernelSpec::wendland_c2(Dimensionality::Two, 0.024);
    let rs: Vec<f64> = (0..1024).map(|i| i as f64 * 0.048 / 1024.0).collect();
    c.bench_function("wendland_c2_eval_1024", |b| {
        b.iter(|| rs.iter().map(|&r| k.eval(black_box(r)).1).sum::<f64>())
    });
}

fn step(c: &mut Criterion) {
    let (case, frame) = dam_break();
    let dt = SolverState::new(&case, frame.clone()).unwrap().compute_dt();
    c.bench_function("dam_break_step", |b| {
        b.iter_batched(
            || SolverState::new(&case, frame.clone()).unwrap(),
            |mut s| black_box(s.step(dt).is_ok()),
            criterion::BatchSize::LargeInput,
        )
    });
}

fn xml(c: &mut Criterion) {
    let (case, _) = dam_break();
    let doc = emit_case(&case).unwrap();
    c.bench_function("parse_case_document", |b| b.iter(|| parse_case(black_box(&doc)).unwrap()));
    c.bench_function("emit_case_document", |b| b.iter(|| emit_case(black_box(&case)).unwrap()));
}

criterion_group!(benches, neighbors, kernel, step, xml);
criterion_main!(benches);
