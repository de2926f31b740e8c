//! Parameter sweeps over `(eta, theta, sigma)`, each combination solved and
//! exported on its own so that one failure does not stop the rest.

use std::path::PathBuf;

use habit_core::pension::{solve_with, ValuePolicySolution};
use habit_core::scaled::{solve_scaled_with, ScaledSolution, ThetaMode};
use habit_core::ModelParams;
use log::{error, info};

use crate::commands::{tag, CliError};
use crate::config::RunConfig;
use crate::export;

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub combinations: usize,
    pub written: Vec<PathBuf>,
    /// Combination label and error message of each failure.
    pub failures: Vec<(String, String)>,
}

/// Every `(eta, theta, sigma)` combination of the sweep lists; a list left
/// unset contributes the model value.
pub fn combinations(cfg: &RunConfig) -> Vec<ModelParams> {
    let m = cfg.model;
    let etas = cfg.sweep.eta.clone().unwrap_or_else(|| vec![m.eta]);
    let thetas = cfg.sweep.theta.clone().unwrap_or_else(|| vec![m.theta]);
    let sigmas = cfg.sweep.sigma.clone().unwrap_or_else(|| vec![m.sigma]);
    let mut out = Vec::new();
    for &eta in &etas {
        for &theta in &thetas {
            for &sigma in &sigmas {
                out.push(ModelParams { eta, theta, sigma, ..m });
            }
        }
    }
    out
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome, CliError> {
    let combos = combinations(cfg);
    let mut outcome = SweepOutcome { combinations: combos.len(), ..Default::default() };
    for params in combos {
        let label = format!("eta{}_theta{}_sigma{}", tag(params.eta), tag(params.theta), tag(params.sigma));
        let run_cfg = RunConfig { model: params, ..cfg.clone() };
        match one(&run_cfg, &label) {
            Ok(mut files) => {
                info!("sweep {label}: {} files", files.len());
                outcome.written.append(&mut files);
            }
            Err(e) => {
                error!("sweep {label} failed: {e}");
                outcome.failures.push((label, e.to_string()));
            }
        }
    }
    Ok(outcome)
}

fn one(cfg: &RunConfig, label: &str) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let grid = cfg.grid2d()?;
    let sol = solve_with(&cfg.model, &grid, &cfg.solver_options())?;
    let scaled_params = ModelParams { pi: 0.0, ..cfg.model };
    let scaled = solve_scaled_with(&scaled_params, &cfg.scaled_grid()?, ThetaMode::Fixed, &cfg.scaled_options())?;
    let h = export::header("sweep", cfg, &[]);
    let dir = cfg.out.join("sweep");
    Ok(vec![
        export::write_table(
            &dir.join(format!("{label}_c_vs_w.csv")),
            &h,
            &["cbar_request", "cbar_node", "w", "c_star"],
            &consumption_vs_wealth(&sol, &cfg.sweep.cbar),
        )?,
        export::write_table(
            &dir.join(format!("{label}_c_vs_cbar.csv")),
            &h,
            &["w_request", "w_node", "cbar", "c_star"],
            &consumption_vs_habit(&sol, &cfg.sweep.w),
        )?,
        export::write_table(
            &dir.join(format!("{label}_scaled.csv")),
            &h,
            &["cbar", "xs", "q_pension", "q_no_pension"],
            &scaled_comparison(&sol, &scaled, &cfg.sweep.cbar),
        )?,
    ])
}

/// `c*(0, w, cbar)` along the wealth nodes at the habit node nearest each
/// request.
pub fn consumption_vs_wealth(sol: &ValuePolicySolution, cbars: &[f64]) -> Vec<Vec<f64>> {
    let g = &sol.grid;
    let p = &sol.initial().policy;
    let mut rows = Vec::new();
    for &c in cbars {
        let k = g.c_axis.nearest(c);
        for (j, &w) in g.w_axis.nodes().iter().enumerate() {
            rows.push(vec![c, g.c_axis.nodes()[k], w, p[g.idx(j, k)]]);
        }
    }
    rows
}

/// `c*(0, w, cbar)` along the habit nodes at the wealth node nearest each
/// request.
pub fn consumption_vs_habit(sol: &ValuePolicySolution, ws: &[f64]) -> Vec<Vec<f64>> {
    let g = &sol.grid;
    let p = &sol.initial().policy;
    let mut rows = Vec::new();
    for &w in ws {
        let j = g.w_axis.nearest(w);
        for (k, &c) in g.c_axis.nodes().iter().enumerate() {
            rows.push(vec![w, g.w_axis.nodes()[j], c, p[g.idx(j, k)]]);
        }
    }
    rows
}

/// Consumption-to-habit ratio against `xs = w / cbar`: the pension solve at
/// each habit level next to the no-pension scaled solve, which is the same
/// curve for every habit.
pub fn scaled_comparison(sol: &ValuePolicySolution, scaled: &ScaledSolution, cbars: &[f64]) -> Vec<Vec<f64>> {
    let g = &sol.grid;
    let p = &sol.initial().policy;
    let xs_max = scaled.grid.xs_axis.hi();
    let mut rows = Vec::new();
    for &c in cbars {
        let k = g.c_axis.nearest(c);
        let cbar = g.c_axis.nodes()[k];
        for (j, &w) in g.w_axis.nodes().iter().enumerate() {
            let xs = w / cbar;
            if xs > xs_max {
                break;
            }
            rows.push(vec![cbar, xs, p[g.idx(j, k)] / cbar, scaled.q0(xs)]);
        }
    }
    rows
}
