//! Expected time until wealth first hits zero, under a solved consumption
//! policy.
//!
//! `Td(t, w, cbar)` solves the linear backward equation obtained from the
//! value equation by freezing consumption at the optimum, dropping utility,
//! discounting and mortality, and adding a unit source. It vanishes at
//! `w = 0` and at the horizon. The depletion age is `x + Td(0, w0, cbar0)`.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{upwind_split, Grid2D, SurfaceView, ThomasSolver};
use crate::pension::{bilinear, Retention, ValuePolicySolution};

#[derive(Debug, Clone, PartialEq)]
pub struct WdtSnapshot {
    pub step: usize,
    pub t: f64,
    pub td: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WdtSolution {
    pub grid: Grid2D,
    pub params: ModelParams,
    /// Describes the policy solve this was computed from.
    pub policy_ref: String,
    /// Ordered from the horizon back to `t = 0`.
    pub snapshots: Vec<WdtSnapshot>,
    pub boundary_drops: u64,
}

impl WdtSolution {
    pub fn initial(&self) -> &WdtSnapshot {
        self.snapshots.last().expect("solution always holds the t = 0 slice")
    }

    pub fn view<'s>(&'s self, snap: &'s WdtSnapshot) -> SurfaceView<'s> {
        SurfaceView::new(&self.grid.w_axis, &self.grid.c_axis, &snap.td).expect("snapshot matches its grid")
    }
}

/// Short identifier of a policy solve, recorded with derived results.
pub fn policy_id(sol: &ValuePolicySolution) -> String {
    let p = &sol.params;
    let g = &sol.grid;
    format!(
        "pension-hjb eta={} theta={} sigma={} pi={} M={} K={} N={} w_max={} cbar=[{}, {}]",
        p.eta,
        p.theta,
        p.sigma,
        p.pi,
        g.n_w(),
        g.n_c(),
        g.n_time,
        g.w_axis.hi(),
        g.c_axis.lo(),
        g.c_axis.hi()
    )
}

/// Policy slice for step `n`, linear in the step index between retained
/// slices.
fn policy_slice(policy: &ValuePolicySolution, n: usize, out: &mut [f64]) {
    let snaps = &policy.snapshots;
    let pos = snaps.partition_point(|s| s.step < n);
    if pos < snaps.len() && snaps[pos].step == n {
        out.copy_from_slice(&snaps[pos].policy);
        return;
    }
    let (a, b) = (&snaps[pos - 1], &snaps[pos]);
    let wgt = (n - a.step) as f64 / (b.step - a.step) as f64;
    for ((o, x), y) in out.iter_mut().zip(&a.policy).zip(&b.policy) {
        *o = (1.0 - wgt) * x + wgt * y;
    }
}

/// Marches the depletion-time equation on the policy's own grid.
pub fn solve_wdt(policy: &ValuePolicySolution, grid: &Grid2D, params: &ModelParams) -> Result<WdtSolution> {
    solve_wdt_with(policy, grid, params, Retention::Ends)
}

pub fn solve_wdt_with(
    policy: &ValuePolicySolution,
    grid: &Grid2D,
    params: &ModelParams,
    retention: Retention,
) -> Result<WdtSolution> {
    if !grid.same_space(&policy.grid) || grid.n_time != policy.grid.n_time {
        return Err(Error::GridMismatch("depletion grid differs from the policy grid".into()));
    }
    if params != &policy.params {
        return Err(Error::GridMismatch("parameters differ from those of the policy solve".into()));
    }
    let snaps = &policy.snapshots;
    if snaps.first().map(|s| s.step) != Some(0) || snaps.last().map(|s| s.step) != Some(grid.n_time) {
        return Err(Error::GridMismatch("policy solve must retain both end slices".into()));
    }

    let m = grid.n_w();
    let nk = grid.n_c();
    let dt = grid.dt();
    let inv_dt = 1.0 / dt;
    let inv_dw = 1.0 / grid.w_axis.spacing();
    let inv_dc = 1.0 / grid.c_axis.spacing();
    let a = params.portfolio_drift();
    let half_var = 0.5 * params.portfolio_variance();
    let w_nodes = grid.w_axis.nodes();
    let c_nodes = grid.c_axis.nodes();
    let diffusion: Vec<f64> = w_nodes.iter().map(|w| half_var * w * w * inv_dw * inv_dw).collect();

    let stride = retention.stride(dt, grid.n_time);
    let mut td = vec![0.0; grid.n_nodes()];
    let mut next = vec![0.0; grid.n_nodes()];
    let mut pol = vec![0.0; grid.n_nodes()];
    let mut snapshots = vec![WdtSnapshot { step: 0, t: grid.time(0), td: td.clone() }];
    let mut drops = 0u64;
    let mut max_beta = 0.0f64;

    for n in 0..grid.n_time {
        policy_slice(policy, n, &mut pol);
        let (d, b) = next
            .par_chunks_mut(m)
            .enumerate()
            .map_init(
                || (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], ThomasSolver::new(m)),
                |(lower, dg, upper, rhs, thomas), (k, out)| -> Result<(u64, f64)> {
                    let base = k * m;
                    let cbar = c_nodes[k];
                    let mut drops = 0u64;
                    let mut max_beta = 0.0f64;
                    lower[0] = 0.0;
                    dg[0] = 1.0;
                    upper[0] = 0.0;
                    rhs[0] = 0.0;
                    for j in 1..m - 1 {
                        let c = pol[base + j];
                        let alpha = (c - params.pi - a * w_nodes[j]) * inv_dw;
                        let (ap, am) = upwind_split(alpha);
                        let dj = diffusion[j];
                        lower[j] = -ap - dj;
                        dg[j] = inv_dt + ap - am + 2.0 * dj;
                        upper[j] = am - dj;
                        let beta = -params.eta * (c - cbar);
                        max_beta = max_beta.max(beta.abs());
                        let here = td[base + j];
                        let habit = if beta > 0.0 {
                            if k > 0 {
                                beta * (here - td[base - m + j]) * inv_dc
                            } else {
                                drops += 1;
                                0.0
                            }
                        } else if beta < 0.0 {
                            if k + 1 < nk {
                                beta * (td[base + m + j] - here) * inv_dc
                            } else {
                                drops += 1;
                                0.0
                            }
                        } else {
                            0.0
                        };
                        rhs[j] = here * inv_dt - habit + 1.0;
                    }
                    lower[m - 1] = -1.0;
                    dg[m - 1] = 1.0;
                    upper[m - 1] = 0.0;
                    rhs[m - 1] = 0.0;
                    thomas.solve(lower, dg, upper, rhs, out)?;
                    Ok((drops, max_beta))
                },
            )
            .try_reduce(|| (0, 0.0), |x, y| Ok((x.0 + y.0, x.1.max(y.1))))?;
        drops += d;
        max_beta = max_beta.max(b);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: n + 1 });
        }
        std::mem::swap(&mut td, &mut next);
        let s = n + 1;
        if s == grid.n_time || s % stride == 0 {
            snapshots.push(WdtSnapshot { step: s, t: grid.time(s), td: td.clone() });
        }
    }
    let courant = max_beta * dt * inv_dc;
    if courant > 1.0 + 1e-9 {
        warn!("depletion-time march exceeded the habit CFL limit (Courant {courant:.3})");
    }
    Ok(WdtSolution {
        grid: grid.clone(),
        params: *params,
        policy_ref: policy_id(policy),
        snapshots,
        boundary_drops: drops,
    })
}

/// Age at which wealth is expected to run out, starting from `(w0, cbar0)`
/// at retirement. Queries outside the grid are clamped.
pub fn depletion_age(sol: &WdtSolution, w0: f64, cbar0: f64) -> f64 {
    let g = &sol.grid;
    if !(g.w_axis.lo()..=g.w_axis.hi()).contains(&w0) || !(g.c_axis.lo()..=g.c_axis.hi()).contains(&cbar0) {
        warn!("depletion query ({w0}, {cbar0}) lies outside the grid and was clamped");
    }
    sol.params.retire_age + bilinear(g, &sol.initial().td, w0, cbar0)
}
