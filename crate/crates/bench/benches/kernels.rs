use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use habit_bench::{coarse_policy, production_grid};
use habit_core::montecarlo::{simulate_paths, SimConfig};
use habit_core::numerics::ThomasSolver;
use habit_core::pension::{step_backward, Diagnostics, PensionStepper, SolverOptions};
use habit_core::ModelParams;

fn thomas(c: &mut Criterion) {
    let mut group = c.benchmark_group("thomas");
    for m in [513usize, 1025, 4097] {
        let lower = vec![-1.0; m];
        let diag = vec![4.0; m];
        let upper = vec![-1.5; m];
        let rhs: Vec<f64> = (0..m).map(|i| (i as f64).sin()).collect();
        let mut out = vec![0.0; m];
        let mut solver = ThomasSolver::new(m);
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| solver.solve(&lower, &diag, &upper, black_box(&rhs), &mut out).unwrap())
        });
    }
    group.finish();
}

fn pension_step(c: &mut Criterion) {
    let p = ModelParams { eta: 0.1, ..Default::default() };
    let grid = production_grid(1000);
    let opts = SolverOptions::default();
    // march a few steps so the slice is not the trivial terminal one
    let mut v = vec![0.0; grid.n_nodes()];
    for n in 0..20 {
        v = step_backward(&v, n, &grid, &p, &opts).unwrap().0;
    }
    let stepper = PensionStepper::new(&p, &grid, &opts).unwrap();
    let mut next = vec![0.0; grid.n_nodes()];
    let mut diag = Diagnostics::default();
    c.bench_function("pension_step_513x80", |b| {
        b.iter(|| stepper.step(black_box(&v), 20, &mut next, &mut diag).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let policy = coarse_policy(0.1);
    let cfg = SimConfig { n_paths: 200, ..Default::default() };
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("200_paths_55_years_daily", |b| {
        b.iter(|| simulate_paths(&policy, black_box(&cfg), &policy.params).unwrap())
    });
    group.finish();
}

criterion_group!(benches, thomas, pension_step, simulation);
criterion_main!(benches);
