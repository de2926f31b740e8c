//! Fixtures shared by the benchmarks.

use habit_core::numerics::Grid2D;
use habit_core::pension::{solve_with, Retention, SolverOptions, ValuePolicySolution};
use habit_core::ModelParams;

/// The production wealth x habit grid: 513 x 80 nodes on `[0, 150] x [0.1, 30]`.
pub fn production_grid(n_time: usize) -> Grid2D {
    Grid2D::uniform(150.0, 513, 0.1, 30.0, 80, n_time, 55.0).expect("valid grid")
}

/// A coarse policy for simulation benchmarks.
pub fn coarse_policy(eta: f64) -> ValuePolicySolution {
    let p = ModelParams { eta, ..Default::default() };
    let g = Grid2D::uniform(100.0, 101, 0.5, 20.0, 40, 1100, p.horizon).expect("valid grid");
    solve_with(&p, &g, &SolverOptions { retention: Retention::Interval(0.1), ..Default::default() })
        .expect("coarse solve succeeds")
}
