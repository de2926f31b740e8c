//! The no-pension problem in scaled wealth `xs = w / cbar`.
//!
//! Without income the value function is homogeneous, so
//! `V(t, w, cbar) = nu(t, w / cbar)` and one space dimension suffices. The
//! consumption-to-habit ratio `q` is the control; the risky share can either
//! be fixed or chosen optimally at every node. The `eta = 0` case has a closed
//! form, [`merton_h`], used as an oracle for both PDE solvers.

use log::warn;

use crate::error::{Error, Result};
use crate::model::{crra, ModelParams};
use crate::numerics::{inv_cbrt, upwind_split, Grid1D, ThomasSolver};
use crate::pension::Retention;

/// Space-time grid of the scaled problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGrid {
    pub xs_axis: Grid1D,
    pub n_time: usize,
    pub horizon: f64,
}

impl ScaledGrid {
    /// `n_xs` nodes on `[0, xs_max]`.
    pub fn uniform(xs_max: f64, n_xs: usize, n_time: usize, horizon: f64) -> Result<Self> {
        if !(xs_max > 0.0) {
            return Err(Error::InvalidGrid(format!("xs_max must be positive, got {xs_max}")));
        }
        if n_time == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidGrid("need at least one time step over a positive horizon".into()));
        }
        if n_xs < 4 {
            return Err(Error::InvalidGrid("scaled axis needs at least 4 nodes".into()));
        }
        Ok(Self { xs_axis: Grid1D::uniform(0.0, xs_max, n_xs)?, n_time, horizon })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_time as f64
    }

    /// Calendar time (years after retirement) of slice `n`.
    pub fn time(&self, n: usize) -> f64 {
        if n >= self.n_time {
            0.0
        } else {
            self.horizon - n as f64 * self.dt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaMode {
    /// Use `params.theta` everywhere.
    Fixed,
    /// Maximise over the risky share in `[0, 1]` at every node and step.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledOptions {
    pub marginal_floor: f64,
    /// Uniform upper bound on `q`. `None` bounds `q` at `xs` by `xs / dt`,
    /// so no more than the wealth on hand is spent within one step.
    pub ratio_cap: Option<f64>,
    pub retention: Retention,
}

impl Default for ScaledOptions {
    fn default() -> Self {
        Self { marginal_floor: 1e-10, ratio_cap: None, retention: Retention::Interval(0.1) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScaledDiagnostics {
    pub steps: usize,
    pub floor_activations: u64,
    pub cap_activations: u64,
    /// Control mode: nodes where the optimal share fell outside `[0, 1]`.
    pub theta_clamps: u64,
    /// Control mode: nodes with non-negative curvature, where the share is
    /// set to the upper bound.
    pub convex_nodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSnapshot {
    pub step: usize,
    pub t: f64,
    pub nu: Vec<f64>,
    pub q_star: Vec<f64>,
    pub theta_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ScaledSolution {
    pub grid: ScaledGrid,
    pub params: ModelParams,
    pub mode: ThetaMode,
    /// Ordered from the horizon back to `t = 0`.
    pub snapshots: Vec<ScaledSnapshot>,
    pub diagnostics: ScaledDiagnostics,
}

impl ScaledSolution {
    pub fn initial(&self) -> &ScaledSnapshot {
        self.snapshots.last().expect("solution always holds the t = 0 slice")
    }

    /// `nu(0, xs)`, linear between nodes and clamped to the axis.
    pub fn nu0(&self, xs: f64) -> f64 {
        crate::numerics::linear_1d(&self.grid.xs_axis, &self.initial().nu, xs)
    }

    pub fn q0(&self, xs: f64) -> f64 {
        crate::numerics::linear_1d(&self.grid.xs_axis, &self.initial().q_star, xs)
    }
}

struct Stepper<'a> {
    grid: &'a ScaledGrid,
    params: &'a ModelParams,
    mode: ThetaMode,
    floor: f64,
    cap: Vec<f64>,
    inv_dx: f64,
    inv_gamma: f64,
    cube_root: bool,
}

struct Policy {
    q: Vec<f64>,
    /// `q * marginal`, i.e. `(1 - gamma) u(q)` where `q` is uncapped.
    q_marginal: Vec<f64>,
    capped: Vec<bool>,
    theta: Vec<f64>,
}

impl<'a> Stepper<'a> {
    /// Optimal ratio and share from the known slice.
    fn policy(&self, nu: &[f64], diag: &mut ScaledDiagnostics) -> Policy {
        let n = nu.len();
        let xs = self.grid.xs_axis.nodes();
        let p = self.params;
        let mut out = Policy {
            q: vec![0.0; n],
            q_marginal: vec![0.0; n],
            capped: vec![false; n],
            theta: vec![p.theta; n],
        };
        if self.mode == ThetaMode::Control {
            let ratio = (p.mu - p.r) / (p.sigma * p.sigma);
            let h = self.grid.xs_axis.spacing();
            for i in 2..n - 1 {
                let d1 = (nu[i + 1] - nu[i - 1]) / (2.0 * h);
                let d2 = (nu[i + 1] - 2.0 * nu[i] + nu[i - 1]) / (h * h);
                out.theta[i] = if d2 < 0.0 {
                    let raw = -ratio * d1 / (d2 * xs[i]);
                    if !(0.0..=1.0).contains(&raw) {
                        diag.theta_clamps += 1;
                    }
                    raw.clamp(0.0, 1.0)
                } else {
                    // with no curvature penalty the objective is increasing
                    // in the share whenever the excess return is positive
                    diag.convex_nodes += 1;
                    if d1 * (p.mu - p.r) > 0.0 { 1.0 } else { 0.0 }
                };
            }
            // the mirrored origin makes the curvature at node 1 meaningless
            out.theta[0] = out.theta[2];
            out.theta[1] = out.theta[2];
            out.theta[n - 1] = out.theta[n - 2];
        }
        for i in 1..n {
            // the origin mirrors node 1, so look forward there; the far node
            // is tied to its neighbour, so reuse the interior slope
            let nu_x = if i == 1 {
                (nu[2] - nu[1]) * self.inv_dx
            } else if i == n - 1 {
                (nu[n - 2] - nu[n - 3]) * self.inv_dx
            } else {
                (nu[i] - nu[i - 1]) * self.inv_dx
            };
            let mut marginal = (p.eta * xs[i] + 1.0) * nu_x;
            if !(marginal >= self.floor) {
                marginal = self.floor;
                diag.floor_activations += 1;
            }
            let root = if self.cube_root { inv_cbrt(marginal) } else { marginal.powf(-self.inv_gamma) };
            let cap = if i == 1 {
                // wealth at the first node must not drift onto the origin
                let growth = out.theta[1] * (p.mu - p.r) + p.r + p.eta;
                self.cap[1].min(growth * xs[1] / (p.eta * xs[1] + 1.0))
            } else {
                self.cap[i]
            };
            if root > cap {
                out.q[i] = cap;
                out.capped[i] = true;
                diag.cap_activations += 1;
            } else {
                out.q[i] = root;
                out.q_marginal[i] = root * marginal;
            }
        }
        out
    }

    fn step(
        &self,
        nu: &[f64],
        n: usize,
        next: &mut [f64],
        bands: &mut [Vec<f64>; 4],
        thomas: &mut ThomasSolver,
        diag: &mut ScaledDiagnostics,
    ) -> Result<()> {
        let p = self.params;
        let len = nu.len();
        let xs = self.grid.xs_axis.nodes();
        let inv_dt = 1.0 / self.grid.dt();
        let discount = p.rho + p.hazard_after(self.grid.time(n + 1));
        let policy = self.policy(nu, diag);
        let [lower, dg, upper, rhs] = bands;
        let util_scale = 1.0 / (1.0 - p.gamma);

        // nu is unbounded below at xs = 0, so node 0 only mirrors node 1; the
        // consumption bound at node 1 keeps its drift from pointing at it
        lower[0] = 0.0;
        dg[0] = 1.0;
        upper[0] = -1.0;
        rhs[0] = 0.0;
        for i in 1..len - 1 {
            let th = policy.theta[i];
            let q = policy.q[i];
            let growth = (th * (p.mu - p.r) + p.r + p.eta) * xs[i];
            let alpha = ((p.eta * xs[i] + 1.0) * q - growth) * self.inv_dx;
            let d = 0.5 * th * th * p.sigma * p.sigma * xs[i] * xs[i] * self.inv_dx * self.inv_dx;
            let (ap, am) = upwind_split(alpha);
            lower[i] = -ap - d;
            dg[i] = inv_dt + discount + ap - am + 2.0 * d;
            upper[i] = am - d;
            let util = if policy.capped[i] { crra(q, p.gamma) } else { policy.q_marginal[i] * util_scale };
            rhs[i] = nu[i] * inv_dt + util;
        }
        lower[len - 1] = -1.0;
        dg[len - 1] = 1.0;
        upper[len - 1] = 0.0;
        rhs[len - 1] = 0.0;
        thomas.solve(lower, dg, upper, rhs, next)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: n + 1 });
        }
        diag.steps += 1;
        Ok(())
    }

    fn snapshot(&self, step: usize, nu: &[f64]) -> ScaledSnapshot {
        let mut scratch = ScaledDiagnostics::default();
        let policy = self.policy(nu, &mut scratch);
        ScaledSnapshot {
            step,
            t: self.grid.time(step),
            nu: nu.to_vec(),
            q_star: policy.q,
            theta_star: (self.mode == ThetaMode::Control).then_some(policy.theta),
        }
    }
}

pub fn solve_scaled(params: &ModelParams, grid: &ScaledGrid, mode: ThetaMode) -> Result<ScaledSolution> {
    solve_scaled_with(params, grid, mode, &ScaledOptions::default())
}

pub fn solve_scaled_with(
    params: &ModelParams,
    grid: &ScaledGrid,
    mode: ThetaMode,
    opts: &ScaledOptions,
) -> Result<ScaledSolution> {
    params.validate()?;
    if (grid.horizon - params.horizon).abs() > 1e-9 * params.horizon {
        return Err(Error::GridMismatch(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon, params.horizon
        )));
    }
    if params.portfolio_drift() + params.eta <= 0.0 {
        return Err(crate::error::invalid(
            "model.theta",
            "the scaled problem needs a positive expected portfolio return",
        ));
    }
    if params.pi != 0.0 {
        warn!("scaled solver ignores the pension (pi = {})", params.pi);
    }
    let stepper = Stepper {
        grid,
        params,
        mode,
        floor: opts.marginal_floor,
        cap: grid
            .xs_axis
            .nodes()
            .iter()
            .map(|x| opts.ratio_cap.unwrap_or(x / grid.dt()))
            .collect(),
        inv_dx: 1.0 / grid.xs_axis.spacing(),
        inv_gamma: 1.0 / params.gamma,
        cube_root: params.gamma == 3.0,
    };
    let len = grid.xs_axis.len();
    let stride = opts.retention.stride(grid.dt(), grid.n_time);
    let mut nu = vec![0.0; len];
    let mut next = vec![0.0; len];
    let mut bands = [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    let mut thomas = ThomasSolver::new(len);
    let mut diagnostics = ScaledDiagnostics::default();
    let mut snapshots = vec![stepper.snapshot(0, &nu)];
    for n in 0..grid.n_time {
        stepper.step(&nu, n, &mut next, &mut bands, &mut thomas, &mut diagnostics)?;
        std::mem::swap(&mut nu, &mut next);
        let s = n + 1;
        if s == grid.n_time || s % stride == 0 {
            snapshots.push(stepper.snapshot(s, &nu));
        }
    }
    Ok(ScaledSolution { grid: grid.clone(), params: *params, mode, snapshots, diagnostics })
}

/// Closed-form value multiplier of the `eta = 0` problem: for fixed risky
/// share, `nu(t, xs) = h(t) u(xs)` with `h(T) = 1`.
///
/// `h^(1/gamma)` solves a linear first-order equation whose integrating
/// factor involves the Gompertz integrated hazard; the remaining integral is
/// done by quadrature.
pub fn merton_h(params: &ModelParams, t: f64) -> Result<f64> {
    let p = params;
    let horizon = p.horizon;
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("time must lie in [0, {horizon}], got {t}")));
    }
    let g = p.gamma;
    let f1 = merton_growth(p);
    let b = p.gompertz_b;
    let shift = (p.retire_age - p.gompertz_m) / b;
    let f2 = (shift + horizon / b).exp();
    let exponent = |s: f64| (f1 * (horizon - s) - f2 + (shift + s / b).exp()) / g;
    if t == horizon {
        return Ok(1.0);
    }
    let out = quadrature::integrate(|s| (-exponent(s)).exp(), t, horizon, 1e-12);
    let scale = out.integral.abs().max(1.0);
    if !out.integral.is_finite() || out.error_estimate > 1e-9 * scale {
        return Err(Error::Quadrature(format!(
            "value multiplier at t = {t}: integral {} with error estimate {}",
            out.integral, out.error_estimate
        )));
    }
    Ok((exponent(t).exp() * (1.0 + out.integral)).powf(g))
}

/// Growth coefficient `-rho + (1 - gamma)(theta (mu - r) + r - gamma theta^2 sigma^2 / 2)`
/// of the `eta = 0` value multiplier.
pub fn merton_growth(p: &ModelParams) -> f64 {
    -p.rho + (1.0 - p.gamma) * (p.portfolio_drift() - 0.5 * p.gamma * p.portfolio_variance())
}

/// Consumption-to-wealth ratio of the `eta = 0` optimum at time `t`.
pub fn merton_consumption_rate(params: &ModelParams, t: f64) -> Result<f64> {
    Ok(merton_h(params, t)?.powf(-1.0 / params.gamma))
}

/// Unconstrained optimal risky share `(mu - r) / (gamma sigma^2)`.
pub fn merton_share(p: &ModelParams) -> f64 {
    (p.mu - p.r) / (p.gamma * p.sigma * p.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_multiplier_is_one_at_horizon() {
        let p = ModelParams { eta: 0.0, ..Default::default() };
        assert_eq!(merton_h(&p, p.horizon).unwrap(), 1.0);
        assert!(merton_h(&p, -1.0).is_err());
    }

    #[test]
    fn growth_coefficient_by_hand() {
        let p = ModelParams::default();
        // -0.02 + (-2)(0.056 - 1.5 * 0.009216)
        assert!((merton_growth(&p) - (-0.02 - 2.0 * (0.056 - 1.5 * 0.009216))).abs() < 1e-15);
        assert!((merton_share(&p) - 0.78125).abs() < 1e-15);
    }

    #[test]
    fn grid_time_axis() {
        let g = ScaledGrid::uniform(100.0, 11, 55, 55.0).unwrap();
        assert_eq!(g.time(0), 55.0);
        assert_eq!(g.time(55), 0.0);
        assert!((g.dt() - 1.0).abs() < 1e-15);
        assert!(ScaledGrid::uniform(0.0, 11, 55, 55.0).is_err());
    }

    #[test]
    fn short_solve_invariants() {
        let p = ModelParams { eta: 0.1, pi: 0.0, ..Default::default() };
        let g = ScaledGrid::uniform(50.0, 101, 550, 55.0).unwrap();
        for mode in [ThetaMode::Fixed, ThetaMode::Control] {
            let sol = solve_scaled(&p, &g, mode).unwrap();
            for s in &sol.snapshots {
                assert!(s.nu.iter().all(|v| *v <= 0.0));
                assert_eq!(s.q_star[0], 0.0);
                assert!(s.q_star.iter().all(|q| *q >= 0.0));
                if let Some(th) = &s.theta_star {
                    assert!(th.iter().all(|x| (0.0..=1.0).contains(x)));
                }
            }
            assert_eq!(sol.initial().theta_star.is_some(), mode == ThetaMode::Control);
        }
    }
}
