use habit_core::numerics::Grid2D;
use habit_core::pension::{solve, Diagnostics, Snapshot, SolverOptions, ValuePolicySolution};
use habit_core::wdt::{depletion_age, solve_wdt};
use habit_core::ModelParams;

fn constant_policy(params: &ModelParams, grid: &Grid2D, c: f64) -> ValuePolicySolution {
    let snapshots = [0, grid.n_time]
        .iter()
        .map(|&step| Snapshot {
            step,
            t: grid.time(step),
            value: vec![0.0; grid.n_nodes()],
            policy: vec![c; grid.n_nodes()],
        })
        .collect();
    ValuePolicySolution {
        grid: grid.clone(),
        params: *params,
        options: SolverOptions::default(),
        snapshots,
        diagnostics: Diagnostics::default(),
    }
}

#[test]
fn riskless_overspending_matches_the_ode() {
    // no risky holding and no habit feedback: wealth follows
    // dw = (r w + pi - c) dt and hits zero at ln(k / (k - r w0)) / r
    let p = ModelParams { theta: 0.0, eta: 0.0, ..Default::default() };
    let g = Grid2D::uniform(20.0, 801, 1.0, 5.0, 3, 5500, p.horizon).unwrap();
    let c = 3.0;
    let policy = constant_policy(&p, &g, c);
    let td = solve_wdt(&policy, &g, &p).unwrap();
    let k = c - p.pi;
    for w0 in [1.0, 5.0, 10.0, 15.0] {
        let exact = (k / (k - p.r * w0)).ln() / p.r;
        let got = depletion_age(&td, w0, 2.0) - p.retire_age;
        assert!((got - exact).abs() < 0.05 * exact, "w0 {w0}: {got} vs {exact}");
    }
}

#[test]
fn sustainable_spending_runs_to_the_horizon() {
    let p = ModelParams { theta: 0.0, eta: 0.0, ..Default::default() };
    let g = Grid2D::uniform(20.0, 201, 1.0, 5.0, 3, 550, p.horizon).unwrap();
    let policy = constant_policy(&p, &g, p.pi);
    let td = solve_wdt(&policy, &g, &p).unwrap();
    let age = depletion_age(&td, 10.0, 2.0);
    assert!((age - (p.retire_age + p.horizon)).abs() < 0.5, "{age}");
}

#[test]
fn depletion_age_grows_with_wealth_and_stays_in_range() {
    let p = ModelParams { eta: 0.1, ..Default::default() };
    let g = Grid2D::uniform(100.0, 101, 0.5, 20.0, 40, 1100, p.horizon).unwrap();
    let sol = solve(&p, &g).unwrap();
    let td = solve_wdt(&sol, &g, &p).unwrap();
    for s in &td.snapshots {
        let left = p.horizon - s.t;
        assert!(s.td.iter().all(|v| *v >= 0.0 && *v <= left + 1e-9));
    }
    let ages: Vec<f64> = [1.0, 5.0, 10.0, 20.0, 35.0, 50.0, 75.0].iter().map(|&w| depletion_age(&td, w, 10.0)).collect();
    assert!(ages.windows(2).all(|a| a[1] > a[0]), "{ages:?}");
}
