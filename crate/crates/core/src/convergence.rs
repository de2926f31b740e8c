//! Grid-refinement study of the consumption policy.
//!
//! The policy at a fixed time is computed on a sequence of grids whose
//! interval count doubles along one axis. Consecutive solutions are compared
//! at nodes they share; the ratio of successive differences approaches
//! `2^p` for a scheme of order `p`.

use log::info;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{Grid1D, Grid2D};
use crate::pension::{solve_with, Retention, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Wealth,
    Habit,
}

impl Axis {
    pub fn label(&self) -> &'static str {
        match self {
            Axis::Wealth => "w",
            Axis::Habit => "cbar",
        }
    }
}

/// Which nodes the differences are summed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSet {
    /// Nodes of the coarsest grid in the sequence, the same for every pair.
    Coarsest,
    /// Nodes of the coarser grid of each pair.
    PairCoarse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub params: ModelParams,
    pub axis: Axis,
    /// Interval counts along the refined axis, each double the previous.
    pub intervals: Vec<usize>,
    /// Node count along the other axis.
    pub fixed_nodes: usize,
    pub w_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub n_time: usize,
    /// `(intervals, n_time)` pairs replacing `n_time` at that resolution.
    pub n_time_overrides: Vec<(usize, usize)>,
    /// Years after retirement at which policies are compared.
    pub eval_time: f64,
    pub node_set: NodeSet,
    pub solver: SolverOptions,
}

impl ConvergenceConfig {
    /// The wealth-axis study at 64..1024 intervals with 80 habit nodes.
    pub fn wealth_study(params: ModelParams, n_time: usize) -> Self {
        Self {
            params,
            axis: Axis::Wealth,
            intervals: vec![64, 128, 256, 512, 1024],
            fixed_nodes: 80,
            w_max: 150.0,
            c_min: 0.1,
            c_max: 30.0,
            n_time,
            n_time_overrides: Vec::new(),
            eval_time: 0.0,
            node_set: NodeSet::Coarsest,
            solver: SolverOptions::default(),
        }
    }

    /// The habit-axis study at 64..512 intervals with 1025 wealth nodes.
    pub fn habit_study(params: ModelParams, n_time: usize) -> Self {
        Self {
            axis: Axis::Habit,
            intervals: vec![64, 128, 256, 512],
            fixed_nodes: 1025,
            ..Self::wealth_study(params, n_time)
        }
    }

    fn n_time_for(&self, intervals: usize) -> usize {
        self.n_time_overrides
            .iter()
            .find(|(i, _)| *i == intervals)
            .map_or(self.n_time, |(_, n)| *n)
    }

    fn grid(&self, intervals: usize) -> Result<Grid2D> {
        let (n_w, n_c) = match self.axis {
            Axis::Wealth => (intervals + 1, self.fixed_nodes),
            Axis::Habit => (self.fixed_nodes, intervals + 1),
        };
        Grid2D::uniform(
            self.w_max,
            n_w,
            self.c_min,
            self.c_max,
            n_c,
            self.n_time_for(intervals),
            self.params.horizon,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub axis: Axis,
    pub intervals: Vec<usize>,
    /// Root-sum-square policy difference of each consecutive pair.
    pub l2: Vec<f64>,
    /// `l2[i] / l2[i + 1]`; `None` where a difference vanished.
    pub er: Vec<Option<f64>>,
    /// Set when any pair of solutions was identical.
    pub degenerate: bool,
}

/// Policy at `eval_time` on every node.
fn policy_at(params: &ModelParams, grid: &Grid2D, cfg: &ConvergenceConfig) -> Result<Vec<f64>> {
    let dt = grid.dt();
    let steps_back = ((params.horizon - cfg.eval_time) / dt).round() as usize;
    let retention = if steps_back == grid.n_time { Retention::Ends } else { Retention::Stride(steps_back.max(1)) };
    let sol = solve_with(params, grid, &SolverOptions { retention, ..cfg.solver })?;
    let snap = sol
        .snapshots
        .iter()
        .find(|s| s.step == steps_back)
        .ok_or_else(|| Error::Domain(format!("no slice at t = {}", cfg.eval_time)))?;
    Ok(snap.policy.clone())
}

/// Indices, on `fine`, of every node of `coarse`.
fn coincident(coarse: &Grid1D, fine: &Grid1D) -> Result<Vec<usize>> {
    let ratio = coarse
        .nested_in(fine)
        .ok_or_else(|| Error::GridMismatch("refinement grids are not nested".into()))?;
    Ok((0..coarse.len()).map(|i| i * ratio).collect())
}

/// Indices on `grid` of the nodes of `base`, leaving out the last wealth
/// column, whose policy is set by the truncation condition rather than the
/// model.
fn restriction(base: &Grid2D, grid: &Grid2D) -> Result<Vec<usize>> {
    let mut jw = coincident(&base.w_axis, &grid.w_axis)?;
    jw.pop();
    let kc = coincident(&base.c_axis, &grid.c_axis)?;
    Ok(kc.iter().flat_map(|&k| jw.iter().map(move |&j| grid.idx(j, k))).collect())
}

pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    cfg.params.validate()?;
    if cfg.intervals.len() < 3 {
        return Err(Error::Domain("a refinement study needs at least three resolutions".into()));
    }
    if !(0.0..=cfg.params.horizon).contains(&cfg.eval_time) {
        return Err(Error::Domain(format!("evaluation time {} outside the horizon", cfg.eval_time)));
    }
    let grids = cfg.intervals.iter().map(|&i| cfg.grid(i)).collect::<Result<Vec<_>>>()?;
    for pair in grids.windows(2) {
        let (a, b) = match cfg.axis {
            Axis::Wealth => (&pair[0].w_axis, &pair[1].w_axis),
            Axis::Habit => (&pair[0].c_axis, &pair[1].c_axis),
        };
        if a.nested_in(b) != Some(2) {
            return Err(Error::GridMismatch("each resolution must halve the previous spacing".into()));
        }
    }

    let mut l2 = Vec::with_capacity(grids.len() - 1);
    let mut previous: Option<Vec<f64>> = None;
    for (i, grid) in grids.iter().enumerate() {
        let started = std::time::Instant::now();
        let policy = policy_at(&cfg.params, grid, cfg)?;
        info!(
            "{} intervals along {}: solved in {:.1?}",
            cfg.intervals[i],
            cfg.axis.label(),
            started.elapsed()
        );
        if let Some(prev) = previous.take() {
            let base = match cfg.node_set {
                NodeSet::Coarsest => &grids[0],
                NodeSet::PairCoarse => &grids[i - 1],
            };
            let on_coarse = restriction(base, &grids[i - 1])?;
            let on_fine = restriction(base, grid)?;
            let sum: f64 = on_coarse.iter().zip(&on_fine).map(|(&a, &b)| (prev[a] - policy[b]).powi(2)).sum();
            l2.push(sum.sqrt());
        }
        previous = Some(policy);
    }
    let er: Vec<Option<f64>> = l2.windows(2).map(|p| (p[1] > 0.0).then(|| p[0] / p[1])).collect();
    let degenerate = l2.iter().any(|v| *v == 0.0);
    Ok(ConvergenceReport { axis: cfg.axis, intervals: cfg.intervals.clone(), l2, er, degenerate })
}
