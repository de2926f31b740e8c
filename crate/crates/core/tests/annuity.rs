use habit_core::annuity::{aew_many, annuitization_threshold, delta_v_curve, AnnuityOptions, DeltaWRule, PensionFamily};
use habit_core::numerics::Grid2D;
use habit_core::pension::SolverOptions;
use habit_core::ModelParams;

fn grid() -> Grid2D {
    Grid2D::uniform(60.0, 65, 0.5, 15.0, 30, 1000, 55.0).unwrap()
}

fn slow_habit(theta: f64) -> ModelParams {
    ModelParams { eta: 0.01, theta, ..Default::default() }
}

#[test]
fn annuitizing_nothing_changes_nothing() {
    let opts = AnnuityOptions { rule: DeltaWRule::Fixed(0.0), ..Default::default() };
    let r = delta_v_curve(&slow_habit(0.6), &grid(), 5.0, &opts).unwrap();
    assert!(r.curve.iter().all(|(_, dv)| *dv == 0.0));
    assert_eq!(r.crossing, None);
    assert_eq!(r.rule.label(), "fixed:0");
}

#[test]
fn habit_is_mapped_to_a_grid_node() {
    let g = grid();
    let r = delta_v_curve(&slow_habit(0.6), &g, 10.0, &AnnuityOptions::default()).unwrap();
    assert!(g.c_axis.nodes().contains(&r.cbar));
    assert!((r.cbar - 10.0).abs() <= 0.5 * g.c_axis.spacing());
    let a_x = slow_habit(0.6).annuity_factor().unwrap();
    assert_eq!(r.annuity_factor, a_x);
}

#[test]
fn more_pension_never_hurts() {
    let family = PensionFamily::solve(&slow_habit(0.6), &grid(), &[0.5, 1.0, 1.5, 2.0], &SolverOptions::default()).unwrap();
    assert!(family.dominance_violations(1e-10).is_empty());
}

#[test]
fn riskier_portfolios_delay_annuitization() {
    // with a safe portfolio annuitizing pays from the first unit of wealth
    let g = grid();
    let opts = AnnuityOptions { rule: DeltaWRule::Fixed(1.0), ..Default::default() };
    let safe = annuitization_threshold(&slow_habit(0.0), &g, 10.0, &opts).unwrap();
    assert_eq!(safe.crossing, None);
    let risky = annuitization_threshold(&slow_habit(0.6), &g, 10.0, &opts).unwrap();
    let w_star = risky.crossing.expect("risky portfolio has a threshold");
    assert!(w_star > 1.0 && !risky.multiple_crossings);
}

#[test]
fn annuity_equivalent_wealth() {
    let p = slow_habit(0.6);
    let g = grid();
    let ws = [0.0, 2.0, 5.0, 10.0];
    let out = aew_many(&p, &g, 10.0, &ws, &SolverOptions::default()).unwrap();
    assert_eq!(out[0].w_hat, Some(0.0));
    let hats: Vec<f64> = out.iter().map(|r| r.w_hat.unwrap()).collect();
    assert!(hats.windows(2).all(|h| h[1] > h[0]), "{hats:?}");
    for r in &out {
        assert!(r.mismatch.abs() <= 1e-6 * r.target.abs(), "{r:?}");
    }
}
