use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fracsing::evolution::step_implicit;
use fracsing::stationary::{solve_s, StationaryProblem};
use fracsing::{Field, FracOperator, Grid};
use fracsing_bench::{operator, SIZES};

fn assemble(c: &mut Criterion) {
    let mut g = c.benchmark_group("assemble");
    for n in SIZES {
        let grid = Arc::new(Grid::new(-1.0, 1.0, n).unwrap());
        g.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, grid| {
            b.iter(|| FracOperator::assemble(black_box(grid.clone()), 0.4).unwrap())
        });
    }
    g.finish();
}

fn solve_linear(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_linear");
    for n in SIZES {
        let op = operator(n, 0.4);
        let rhs = Field::from_fn(op.grid().clone(), |_| 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &rhs, |b, rhs| {
            b.iter(|| op.solve_linear(black_box(rhs), 0.0).unwrap())
        });
    }
    g.finish();
}

fn eigen_principal(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigen_principal");
    g.sample_size(10);
    for n in SIZES {
        let op = operator(n, 0.4);
        g.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| op.eigen_principal().unwrap()));
    }
    g.finish();
}

fn stationary(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_s");
    g.sample_size(10);
    for n in SIZES {
        let op = operator(n, 0.4);
        let p = StationaryProblem::new(1.0, 0.5, Field::from_fn(op.grid().clone(), |_| 1.0), 0.0).unwrap();
        g.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| solve_s(black_box(&p), &op).unwrap()));
    }
    g.finish();
}

fn implicit_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("step_implicit");
    for n in SIZES {
        let op = operator(n, 0.4);
        let grid = op.grid().clone();
        let u_prev = Field::from_fn(grid.clone(), |x| (1.0 - x * x).powf(0.3));
        let h = Field::from_fn(grid, |_| 1.0);
        g.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| step_implicit(black_box(&u_prev), &h, 0.05, 0.5, &op, None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, assemble, solve_linear, eigen_principal, stationary, implicit_step);
criterion_main!(benches);
