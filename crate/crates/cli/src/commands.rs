use std::path::PathBuf;

use habit_core::annuity::{aew_many, delta_v_curves};
use habit_core::convergence::run_convergence;
use habit_core::montecarlo::{depletion_stats, simulate_paths};
use habit_core::pension::{solve_with, Retention, SolverOptions, ValuePolicySolution};
use habit_core::scaled::solve_scaled_with;
use habit_core::wdt::{depletion_age, solve_wdt_with};
use habit_core::ModelParams;
use log::info;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::export::{self, DepletionRow, ExportError, ThresholdRow};
use crate::sweep::run_sweep;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Solver(#[from] habit_core::Error),

    #[error(transparent)]
    Export(#[from] ExportError),

    #[error("{failed} of {total} sweep combinations failed")]
    Sweep { failed: usize, total: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    SolveScaled,
    Wdt,
    Simulate,
    Annuitize,
    Converge,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::SolveScaled => "solve-scaled",
            Command::Wdt => "wdt",
            Command::Simulate => "simulate",
            Command::Annuitize => "annuitize",
            Command::Converge => "converge",
            Command::Sweep => "sweep",
        }
    }
}

/// Validates `cfg` and runs `cmd`, returning the files written.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    match cmd {
        Command::Solve => solve(cfg),
        Command::SolveScaled => solve_scaled(cfg),
        Command::Wdt => wdt(cfg),
        Command::Simulate => simulate(cfg),
        Command::Annuitize => annuitize(cfg),
        Command::Converge => converge(cfg),
        Command::Sweep => {
            let outcome = run_sweep(cfg)?;
            if outcome.failures.is_empty() {
                Ok(outcome.written)
            } else {
                Err(CliError::Sweep { failed: outcome.failures.len(), total: outcome.combinations })
            }
        }
    }
}

/// Short decimal tag for file names.
pub(crate) fn tag(x: f64) -> String {
    x.to_string()
}

/// Policy solve keeping slices every tenth of a year, as the depletion-time
/// march and the simulator interpolate between them.
fn dense_policy(cfg: &RunConfig) -> Result<ValuePolicySolution, CliError> {
    let opts = SolverOptions { retention: Retention::Interval(0.1), ..cfg.solver };
    let sol = solve_with(&cfg.model, &cfg.grid2d()?, &opts)?;
    info!("policy solve: {:?}", sol.diagnostics);
    Ok(sol)
}

fn solve(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let sol = solve_with(&cfg.model, &cfg.grid2d()?, &cfg.solver_options())?;
    info!("policy solve: {:?}", sol.diagnostics);
    let h = export::header("solve", cfg, &[]);
    Ok(vec![export::write_surface(&cfg.out.join("surface.csv"), &h, &sol)?])
}

fn solve_scaled(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let sol = solve_scaled_with(&cfg.model, &cfg.scaled_grid()?, cfg.scaled.theta_mode, &cfg.scaled_options())?;
    info!("scaled solve: {:?}", sol.diagnostics);
    let h = export::header("solve-scaled", cfg, &[]);
    Ok(vec![export::write_scaled(&cfg.out.join("scaled.csv"), &h, &sol)?])
}

fn wdt(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let policy = dense_policy(cfg)?;
    let td = solve_wdt_with(&policy, &policy.grid, &cfg.model, cfg.retention())?;
    let h = export::header("wdt", cfg, &[("policy".into(), td.policy_ref.clone())]);
    let mut rows = Vec::new();
    for &c in &cfg.wdt.cbar0 {
        for &w in &cfg.wdt.w0 {
            rows.push(DepletionRow { w0: w, cbar0: c, eta: cfg.model.eta, age: depletion_age(&td, w, c) });
        }
    }
    Ok(vec![
        export::write_wdt(&cfg.out.join("wdt.csv"), &h, &td)?,
        export::write_depletion_ages(&cfg.out.join("depletion_ages.csv"), &h, &rows)?,
    ])
}

fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let policy = dense_policy(cfg)?;
    let paths = simulate_paths(&policy, &cfg.sim, &cfg.model)?;
    let stats = depletion_stats(&paths, &cfg.model)?;
    info!(
        "{} paths: mean depletion age {:.2}, std {:.2}, censored {:.3}",
        stats.n_paths, stats.mean_age, stats.std_age, stats.censored_fraction
    );
    let h = export::header("simulate", cfg, &[("depletion_eps".into(), paths.depletion_eps.to_string())]);
    let mut out = vec![export::write_sim_stats(
        &cfg.out.join("sim_stats.csv"),
        &h,
        cfg.sim.w0,
        cfg.sim.cbar0,
        cfg.model.eta,
        &stats,
    )?];
    if !paths.trajectories.is_empty() {
        out.push(export::write_trajectories(&cfg.out.join("trajectories.csv"), &h, &paths)?);
    }
    Ok(out)
}

fn annuitize(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let opts = cfg.annuity_options();
    let thetas = cfg.sweep.theta.clone().unwrap_or_else(|| vec![cfg.model.theta]);
    let etas = cfg.sweep.eta.clone().unwrap_or_else(|| vec![cfg.model.eta]);
    let mut written = Vec::new();
    let mut rows = Vec::new();
    let dir = cfg.out.join("annuity");
    for &theta in &thetas {
        for &eta in &etas {
            let params = ModelParams { theta, eta, ..cfg.model };
            let run_cfg = RunConfig { model: params, ..cfg.clone() };
            let grid = run_cfg.grid2d()?;
            let curves = delta_v_curves(&params, &grid, &cfg.annuity.cbar, &opts)?;
            for (result, &c) in curves.into_iter().zip(&cfg.annuity.cbar) {
                let extra = [
                    ("rule".to_string(), result.rule.label()),
                    ("annuity_factor".to_string(), result.annuity_factor.to_string()),
                    ("cbar_node".to_string(), result.cbar.to_string()),
                    ("crossing".to_string(), result.crossing.map_or("none".into(), |x| x.to_string())),
                ];
                let h = export::header("annuitize", &run_cfg, &extra);
                let stem = format!("theta{}_eta{}_cbar{}", tag(theta), tag(eta), tag(c));
                written.push(export::write_delta_v(&dir.join(format!("deltaV_{stem}.csv")), &h, &result)?);
                written.push(export::write_delta_v_scaled(&dir.join(format!("deltaV_scaled_{stem}.csv")), &h, &result)?);
                rows.push(ThresholdRow { theta, eta, cbar_request: c, result });
            }
        }
    }
    let h = export::header("annuitize", cfg, &[("rule".into(), cfg.annuity.rule.label())]);
    written.push(export::write_thresholds(&dir.join("thresholds.csv"), &h, &rows)?);
    written.push(export::write_threshold_table(&dir.join("threshold_table.csv"), &h, &rows)?);
    if !cfg.annuity.aew_w.is_empty() {
        let grid = cfg.grid2d()?;
        for &c in &cfg.annuity.cbar {
            let res = aew_many(&cfg.model, &grid, c, &cfg.annuity.aew_w, &opts.solver)?;
            written.push(export::write_aew(&dir.join(format!("aew_cbar{}.csv", tag(c))), &h, &res)?);
        }
    }
    Ok(written)
}

fn converge(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let study = cfg.convergence_config();
    let rep = run_convergence(&study)?;
    if rep.degenerate {
        log::warn!("two consecutive resolutions gave identical policies; error ratios are undefined");
    }
    let h = export::header("converge", cfg, &[]);
    let name = format!("convergence_{}_eta{}.csv", study.axis.label(), tag(cfg.model.eta));
    Ok(vec![export::write_convergence(&cfg.out.join(name), &h, &rep)?])
}
