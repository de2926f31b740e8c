//! Value function and optimal consumption for the retiree with pension
//! income, on a `(t, w, cbar)` grid.
//!
//! Time runs backwards from the horizon: slice `n` lives at `t_n = T - n dt`
//! and `V^0 = 0`. One step assembles, for every habit column `k`, a
//! tridiagonal system in wealth: the discount, wealth-advection and
//! diffusion terms are implicit, the habit advection and the utility source
//! are explicit, and all advection is upwinded by the sign of its
//! coefficient. The consumption policy is evaluated from the known slice.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{crra, ModelParams};
use crate::numerics::{inv_cbrt, upwind_split, Grid2D, SurfaceView, ThomasSolver};

/// Which time slices a solve keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Retention {
    EveryStep,
    /// Keep every `n`-th step (plus both end slices).
    Stride(usize),
    /// Keep a slice roughly every this many years (plus both end slices).
    Interval(f64),
    /// Only the terminal and the `t = 0` slices.
    Ends,
}

impl Retention {
    pub(crate) fn stride(&self, dt: f64, n_time: usize) -> usize {
        match *self {
            Retention::EveryStep => 1,
            Retention::Stride(s) => s.max(1),
            Retention::Interval(years) => ((years / dt).round() as usize).max(1),
            Retention::Ends => n_time.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Lower bound applied to the marginal value before the `-1/gamma` power.
    pub marginal_floor: f64,
    /// Uniform upper bound on consumption. `None` bounds consumption at
    /// `(w, cbar)` by `pi + w / dt` (no more than the wealth on hand is spent
    /// within one step) and by `cbar + dcbar / (eta dt)` (the habit moves at
    /// most one cell per step).
    pub consumption_cap: Option<f64>,
    pub retention: Retention,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            marginal_floor: 1e-10,
            consumption_cap: None,
            retention: Retention::Interval(0.1),
        }
    }
}

/// Counters collected while marching.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub steps: usize,
    /// Nodes where the marginal value had to be floored.
    pub floor_activations: u64,
    /// Nodes where consumption hit the cap.
    pub cap_activations: u64,
    /// Habit-advection terms dropped because their upwind neighbour lies
    /// outside the habit axis.
    pub boundary_drops: u64,
    /// Steps whose explicit habit transport exceeded a Courant number of one.
    pub cfl_violation_steps: u64,
    pub max_courant: f64,
}

impl Diagnostics {
    fn absorb(&mut self, c: ColumnStats, courant: f64) {
        self.floor_activations += c.floors;
        self.cap_activations += c.caps;
        self.boundary_drops += c.drops;
        self.max_courant = self.max_courant.max(courant);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ColumnStats {
    floors: u64,
    caps: u64,
    drops: u64,
    max_beta: f64,
}

impl ColumnStats {
    fn merge(mut self, o: ColumnStats) -> ColumnStats {
        self.floors += o.floors;
        self.caps += o.caps;
        self.drops += o.drops;
        self.max_beta = self.max_beta.max(o.max_beta);
        self
    }
}

/// One retained time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Steps back from the horizon.
    pub step: usize,
    /// Years since retirement.
    pub t: f64,
    pub value: Vec<f64>,
    pub policy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ValuePolicySolution {
    pub grid: Grid2D,
    pub params: ModelParams,
    pub options: SolverOptions,
    /// Ordered by step, i.e. from the horizon back to `t = 0`.
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Diagnostics,
}

impl ValuePolicySolution {
    /// The `t = 0` (retirement age) slice.
    pub fn initial(&self) -> &Snapshot {
        self.snapshots.last().expect("solution always holds the t = 0 slice")
    }

    pub fn value_view<'s>(&'s self, snap: &'s Snapshot) -> SurfaceView<'s> {
        SurfaceView::new(&self.grid.w_axis, &self.grid.c_axis, &snap.value)
            .expect("snapshot matches its grid")
    }

    pub fn policy_view<'s>(&'s self, snap: &'s Snapshot) -> SurfaceView<'s> {
        SurfaceView::new(&self.grid.w_axis, &self.grid.c_axis, &snap.policy)
            .expect("snapshot matches its grid")
    }

    /// Retained slices bracketing time `t`, with the weight of the later one.
    pub fn bracket(&self, t: f64) -> (&Snapshot, &Snapshot, f64) {
        let s = &self.snapshots;
        // times decrease along the vector
        let t = t.clamp(0.0, self.grid.horizon);
        let pos = s.partition_point(|snap| snap.t > t);
        if pos == 0 {
            return (&s[0], &s[0], 0.0);
        }
        if pos >= s.len() {
            let last = &s[s.len() - 1];
            return (last, last, 0.0);
        }
        let later = &s[pos - 1];
        let earlier = &s[pos];
        let span = later.t - earlier.t;
        let wgt = if span > 0.0 { (t - earlier.t) / span } else { 0.0 };
        (earlier, later, wgt)
    }

    fn interp(&self, t: f64, w: f64, cbar: f64, pick: impl Fn(&Snapshot) -> &[f64]) -> f64 {
        let (a, b, wgt) = self.bracket(t);
        let va = bilinear(&self.grid, pick(a), w, cbar);
        if wgt == 0.0 {
            return va;
        }
        let vb = bilinear(&self.grid, pick(b), w, cbar);
        (1.0 - wgt) * va + wgt * vb
    }

    /// Optimal consumption at `(t, w, cbar)`, linear in time between
    /// retained slices and bilinear in space (clamped to the grid).
    pub fn policy_at(&self, t: f64, w: f64, cbar: f64) -> f64 {
        self.interp(t, w, cbar, |s| &s.policy)
    }

    pub fn value_at(&self, t: f64, w: f64, cbar: f64) -> f64 {
        self.interp(t, w, cbar, |s| &s.value)
    }

    /// `V(0, w, cbar)`.
    pub fn value0(&self, w: f64, cbar: f64) -> f64 {
        bilinear(&self.grid, &self.initial().value, w, cbar)
    }

    pub fn policy0(&self, w: f64, cbar: f64) -> f64 {
        bilinear(&self.grid, &self.initial().policy, w, cbar)
    }
}

pub(crate) fn bilinear(grid: &Grid2D, values: &[f64], w: f64, cbar: f64) -> f64 {
    let (j, sw, _) = grid.w_axis.locate(w);
    let (k, sc, _) = grid.c_axis.locate(cbar);
    let n = grid.n_w();
    let v00 = values[k * n + j];
    let v10 = values[k * n + j + 1];
    let v01 = values[(k + 1) * n + j];
    let v11 = values[(k + 1) * n + j + 1];
    (1.0 - sc) * ((1.0 - sw) * v00 + sw * v10) + sc * ((1.0 - sw) * v01 + sw * v11)
}

/// Consumption bounds as a wealth part and a habit part; the bound at node
/// `(j, k)` is the smaller of the two. A uniform override fills the wealth
/// part and leaves the habit part infinite.
pub fn consumption_caps(params: &ModelParams, grid: &Grid2D, uniform: Option<f64>) -> (Vec<f64>, Vec<f64>) {
    let inv_dt = 1.0 / grid.dt();
    let by_w = grid
        .w_axis
        .nodes()
        .iter()
        .map(|w| uniform.unwrap_or(params.pi + w * inv_dt))
        .collect();
    let reach = grid.c_axis.spacing() * inv_dt / params.eta;
    let by_c = grid
        .c_axis
        .nodes()
        .iter()
        .map(|c| if uniform.is_some() || params.eta == 0.0 { f64::INFINITY } else { c + reach })
        .collect();
    (by_w, by_c)
}

/// Precomputed coefficients for marching one parameter set on one grid.
pub struct PensionStepper<'a> {
    grid: &'a Grid2D,
    params: &'a ModelParams,
    floor: f64,
    cap: Vec<f64>,
    cap_by_habit: Vec<f64>,
    /// No income at zero wealth: the value is unbounded below there, so the
    /// `w = 0` node only mirrors `w_1`, and consumption at `w_1` is bounded
    /// by the portfolio growth so that wealth never drifts onto `w = 0`.
    degenerate_origin: bool,
    growth: Vec<f64>,
    diffusion: Vec<f64>,
    c_pow: Vec<f64>,
    inv_gamma: f64,
    cube_root: bool,
    inv_dw: f64,
    inv_dc: f64,
    inv_dt: f64,
}

/// A habit column of a slice together with its habit neighbours.
struct Column<'v> {
    k: usize,
    here: &'v [f64],
    below: Option<&'v [f64]>,
    above: Option<&'v [f64]>,
}

impl<'a> PensionStepper<'a> {
    pub fn new(params: &'a ModelParams, grid: &'a Grid2D, opts: &SolverOptions) -> Result<Self> {
        params.validate()?;
        if (grid.horizon - params.horizon).abs() > 1e-9 * params.horizon {
            return Err(Error::GridMismatch(format!(
                "grid horizon {} differs from model horizon {}",
                grid.horizon, params.horizon
            )));
        }
        if grid.n_w() < 4 {
            return Err(Error::InvalidGrid("wealth axis needs at least 4 nodes".into()));
        }
        let dw = grid.w_axis.spacing();
        let a = params.portfolio_drift();
        let half_var = 0.5 * params.portfolio_variance();
        let growth = grid.w_axis.nodes().iter().map(|w| a * w).collect();
        let diffusion = grid
            .w_axis
            .nodes()
            .iter()
            .map(|w| half_var * w * w / (dw * dw))
            .collect();
        let g = params.gamma;
        let c_pow = grid.c_axis.nodes().iter().map(|c| c.powf((g - 1.0) / g)).collect();
        let degenerate_origin = params.pi == 0.0;
        if degenerate_origin && a <= 0.0 {
            return Err(crate::error::invalid(
                "model.pi",
                "a zero pension needs a positive expected portfolio return",
            ));
        }
        let (mut cap, cap_by_habit) = consumption_caps(params, grid, opts.consumption_cap);
        if degenerate_origin {
            cap[1] = cap[1].min(a * grid.w_axis.nodes()[1]);
        }
        Ok(Self {
            grid,
            params,
            floor: opts.marginal_floor,
            cap,
            cap_by_habit,
            degenerate_origin,
            growth,
            diffusion,
            c_pow,
            inv_gamma: 1.0 / g,
            cube_root: g == 3.0,
            inv_dw: 1.0 / dw,
            inv_dc: 1.0 / grid.c_axis.spacing(),
            inv_dt: 1.0 / grid.dt(),
        })
    }

    /// Consumption bound at node `(j, k)`.
    pub fn consumption_cap(&self, j: usize, k: usize) -> f64 {
        self.cap[j].min(self.cap_by_habit[k])
    }

    fn neighbours<'v>(&self, v: &'v [f64], k: usize) -> Column<'v> {
        let m = self.grid.n_w();
        let nk = self.grid.n_c();
        let base = k * m;
        Column {
            k,
            here: &v[base..base + m],
            below: (k > 0).then(|| &v[base - m..base]),
            above: (k + 1 < nk).then(|| &v[base + m..base + 2 * m]),
        }
    }

    /// Consumption at wealth node `j >= 1` of a column, the marginal value
    /// used, and whether the floor / cap were hit. Differences are backward
    /// in wealth and forward in habit (backward on the top habit row).
    #[inline(always)]
    fn zeta(&self, c: &Column<'_>, j: usize) -> (f64, f64, bool, bool) {
        let here = c.here;
        let last = here.len() - 1;
        let v_w = if j == 1 && self.degenerate_origin {
            here[2] - here[1]
        } else if j == last {
            // the far node is tied to its neighbour; reuse the interior slope
            here[last - 1] - here[last - 2]
        } else {
            here[j] - here[j - 1]
        } * self.inv_dw;
        let v_c = match (c.above, c.below) {
            (Some(a), _) => a[j] - here[j],
            (None, Some(b)) => here[j] - b[j],
            (None, None) => 0.0,
        } * self.inv_dc;
        let mut marginal = v_w - self.params.eta * v_c;
        let floored = !(marginal >= self.floor);
        if floored {
            marginal = self.floor;
        }
        let root = if self.cube_root { inv_cbrt(marginal) } else { marginal.powf(-self.inv_gamma) };
        let z = self.c_pow[c.k] * root;
        let cap = self.cap[j].min(self.cap_by_habit[c.k]);
        if z > cap {
            (cap, marginal, floored, true)
        } else {
            (z, marginal, floored, false)
        }
    }

    fn boundary_zeta(&self, k: usize) -> f64 {
        self.params.pi.min(self.grid.c_axis.nodes()[k])
    }

    /// Optimal consumption on every node of slice `v`.
    pub fn policy_field(&self, v: &[f64]) -> (Vec<f64>, u64, u64) {
        let m = self.grid.n_w();
        let mut out = vec![0.0; v.len()];
        let (mut floors, mut caps) = (0, 0);
        for k in 0..self.grid.n_c() {
            let col = self.neighbours(v, k);
            out[k * m] = self.boundary_zeta(k);
            for j in 1..m {
                let (z, _, f, c) = self.zeta(&col, j);
                floors += f as u64;
                caps += c as u64;
                out[k * m + j] = z;
            }
        }
        (out, floors, caps)
    }

    /// Explicit habit-advection term `beta+ D- V + beta- D+ V` at node `j`.
    #[inline(always)]
    fn habit_term(&self, c: &Column<'_>, j: usize, z: f64, cbar: f64, stats: &mut ColumnStats) -> f64 {
        let beta = -self.params.eta * (z - cbar);
        stats.max_beta = stats.max_beta.max(beta.abs());
        let v = c.here[j];
        if beta > 0.0 {
            match c.below {
                Some(b) => beta * (v - b[j]) * self.inv_dc,
                None => {
                    stats.drops += 1;
                    0.0
                }
            }
        } else if beta < 0.0 {
            match c.above {
                Some(a) => beta * (a[j] - v) * self.inv_dc,
                None => {
                    stats.drops += 1;
                    0.0
                }
            }
        } else {
            0.0
        }
    }

    fn column(
        &self,
        v: &[f64],
        k: usize,
        discount: f64,
        scratch: &mut Scratch,
        out: &mut [f64],
    ) -> Result<ColumnStats> {
        let m = self.grid.n_w();
        let inv_dw = self.inv_dw;
        let inv_dt = self.inv_dt;
        let pi = self.params.pi;
        let g = self.params.gamma;
        let cbar = self.grid.c_axis.nodes()[k];
        let mut stats = ColumnStats::default();
        let Scratch { lower, diag, upper, rhs, thomas } = scratch;
        let col = self.neighbours(v, k);
        let lower = &mut lower[..m];
        let diag = &mut diag[..m];
        let upper = &mut upper[..m];
        let rhs = &mut rhs[..m];
        let time_diag = inv_dt + discount;

        // w = 0
        if self.degenerate_origin {
            lower[0] = 0.0;
            diag[0] = 1.0;
            upper[0] = -1.0;
            rhs[0] = 0.0;
        } else {
            let z = self.boundary_zeta(k);
            let alpha = z - pi;
            lower[0] = 0.0;
            diag[0] = time_diag - alpha * inv_dw;
            upper[0] = alpha * inv_dw;
            rhs[0] = col.here[0] * inv_dt - self.habit_term(&col, 0, z, cbar, &mut stats) + crra(z / cbar, g);
        }

        let util_scale = 1.0 / (1.0 - g);
        for j in 1..m - 1 {
            let (z, marginal, floored, capped) = self.zeta(&col, j);
            stats.floors += floored as u64;
            stats.caps += capped as u64;
            // (z/cbar)^(1-g) equals z * marginal whenever z is uncapped
            let util = if capped { crra(z / cbar, g) } else { z * marginal * util_scale };
            let alpha = (z - pi - self.growth[j]) * inv_dw;
            let d = self.diffusion[j];
            let (ap, am) = upwind_split(alpha);
            lower[j] = -ap - d;
            diag[j] = time_diag + (ap - am) + 2.0 * d;
            upper[j] = am - d;
            rhs[j] = col.here[j] * inv_dt - self.habit_term(&col, j, z, cbar, &mut stats) + util;
        }

        // far field: V_w = 0
        lower[m - 1] = -1.0;
        diag[m - 1] = 1.0;
        upper[m - 1] = 0.0;
        rhs[m - 1] = 0.0;

        debug_assert!((1..m - 1).all(|j| diag[j] >= lower[j].abs() + upper[j].abs() - 1e-9 * diag[j]));
        thomas.solve(lower, diag, upper, rhs, out)?;
        Ok(stats)
    }

    /// Advances slice `n` (at `t_n`) to slice `n + 1` (at `t_{n+1}`).
    pub fn step(&self, v_n: &[f64], n: usize, v_next: &mut [f64], diag: &mut Diagnostics) -> Result<()> {
        let m = self.grid.n_w();
        if v_n.len() != self.grid.n_nodes() || v_next.len() != v_n.len() {
            return Err(Error::GridMismatch("slice length does not match grid".into()));
        }
        let t_next = self.grid.time(n + 1);
        let discount = self.params.rho + self.params.hazard_after(t_next);
        let stats = v_next
            .par_chunks_mut(m)
            .enumerate()
            .map_init(
                || Scratch::new(m),
                |scratch, (k, out)| self.column(v_n, k, discount, scratch, out),
            )
            .try_reduce(ColumnStats::default, |a, b| Ok(a.merge(b)))?;
        if !v_next.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { step: n + 1 });
        }
        diag.steps += 1;
        let courant = stats.max_beta * self.grid.dt() * self.inv_dc;
        if courant > 1.0 + 1e-9 {
            if diag.cfl_violation_steps == 0 {
                warn!("explicit habit transport exceeds CFL limit (Courant {courant:.3}); refine the time grid");
            }
            diag.cfl_violation_steps += 1;
        }
        diag.absorb(stats, courant);
        Ok(())
    }
}

struct Scratch {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    thomas: ThomasSolver,
}

impl Scratch {
    fn new(m: usize) -> Self {
        Self {
            lower: vec![0.0; m],
            diag: vec![0.0; m],
            upper: vec![0.0; m],
            rhs: vec![0.0; m],
            thomas: ThomasSolver::new(m),
        }
    }
}

/// Policy slice `zeta^n` computed from value slice `V^n`.
pub fn optimal_consumption_field(
    v_n: &[f64],
    grid: &Grid2D,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Diagnostics)> {
    let stepper = PensionStepper::new(params, grid, opts)?;
    if v_n.len() != grid.n_nodes() {
        return Err(Error::GridMismatch("slice length does not match grid".into()));
    }
    let (field, floors, caps) = stepper.policy_field(v_n);
    Ok((
        field,
        Diagnostics { floor_activations: floors, cap_activations: caps, ..Default::default() },
    ))
}

/// One backward step `V^n -> V^{n+1}`.
pub fn step_backward(
    v_n: &[f64],
    n: usize,
    grid: &Grid2D,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Diagnostics)> {
    let stepper = PensionStepper::new(params, grid, opts)?;
    let mut next = vec![0.0; v_n.len()];
    let mut diag = Diagnostics::default();
    stepper.step(v_n, n, &mut next, &mut diag)?;
    Ok((next, diag))
}

pub fn solve(params: &ModelParams, grid: &Grid2D) -> Result<ValuePolicySolution> {
    solve_with(params, grid, &SolverOptions::default())
}

pub fn solve_with(params: &ModelParams, grid: &Grid2D, opts: &SolverOptions) -> Result<ValuePolicySolution> {
    let stepper = PensionStepper::new(params, grid, opts)?;
    let stride = opts.retention.stride(grid.dt(), grid.n_time);
    let mut diagnostics = Diagnostics::default();
    let mut v = vec![0.0; grid.n_nodes()];
    let mut next = vec![0.0; grid.n_nodes()];
    let mut snapshots = Vec::new();
    let mut keep = |step: usize, v: &[f64], diag: &mut Diagnostics| {
        let (policy, floors, caps) = stepper.policy_field(v);
        // the terminal slice floors everywhere by construction; only count
        // activations on solved slices
        if step > 0 {
            diag.floor_activations += floors;
            diag.cap_activations += caps;
        }
        snapshots.push(Snapshot { step, t: grid.time(step), value: v.to_vec(), policy });
    };
    keep(0, &v, &mut diagnostics);
    for n in 0..grid.n_time {
        stepper.step(&v, n, &mut next, &mut diagnostics)?;
        std::mem::swap(&mut v, &mut next);
        let s = n + 1;
        if s == grid.n_time || s % stride == 0 {
            keep(s, &v, &mut diagnostics);
        }
    }
    Ok(ValuePolicySolution {
        grid: grid.clone(),
        params: *params,
        options: *opts,
        snapshots,
        diagnostics,
    })
}
