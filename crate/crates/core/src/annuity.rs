//! Whether to convert part of the wealth into a life annuity at retirement.
//!
//! Annuitizing `dw` out of wealth `w` leaves `w - dw` liquid and raises the
//! pension by `dw / a_x`. The utility difference
//! `dV(w) = V(0, w, cbar; pi) - V(0, w - dw, cbar; pi + dw / a_x)` is
//! negative where annuitizing pays.

use log::warn;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::ModelParams;
use crate::numerics::Grid2D;
use crate::pension::{solve_with, Retention, SolverOptions};

/// How much wealth is annuitized at wealth `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaWRule {
    /// The same amount at every wealth level.
    Fixed(f64),
    /// A fraction of wealth.
    Proportional(f64),
    /// All of it.
    Full,
}

impl Default for DeltaWRule {
    fn default() -> Self {
        DeltaWRule::Proportional(0.1)
    }
}

impl DeltaWRule {
    pub fn amount(&self, w: f64) -> f64 {
        match *self {
            DeltaWRule::Fixed(dw) => dw,
            DeltaWRule::Proportional(phi) => phi * w,
            DeltaWRule::Full => w,
        }
    }

    /// Short tag recorded with every output.
    pub fn label(&self) -> String {
        match *self {
            DeltaWRule::Fixed(dw) => format!("fixed:{dw}"),
            DeltaWRule::Proportional(phi) => format!("proportional:{phi}"),
            DeltaWRule::Full => "full".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DeltaWRule::Fixed(dw) if !(dw >= 0.0) || !dw.is_finite() => {
                Err(invalid("annuity.delta_w", "must be non-negative"))
            }
            DeltaWRule::Proportional(phi) if !(0.0..=1.0).contains(&phi) => {
                Err(invalid("annuity.fraction", "must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnuityOptions {
    pub rule: DeltaWRule,
    /// Largest wealth on the curve; `None` uses the whole wealth axis.
    pub w_max_eval: Option<f64>,
    /// Pension levels solved when the annuitized amount varies with wealth;
    /// values in between are interpolated.
    pub pension_levels: usize,
    pub solver: SolverOptions,
}

impl Default for AnnuityOptions {
    fn default() -> Self {
        Self {
            rule: DeltaWRule::default(),
            w_max_eval: None,
            pension_levels: 7,
            solver: SolverOptions { retention: Retention::Ends, ..SolverOptions::default() },
        }
    }
}

/// Time-zero value surfaces for one model at several pension levels.
#[derive(Debug, Clone)]
pub struct PensionFamily {
    pub grid: Grid2D,
    /// The model at the lowest level; the others differ only in `pi`.
    pub params: ModelParams,
    levels: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PensionFamily {
    /// Solves the value problem once per pension level, in parallel.
    pub fn solve(params: &ModelParams, grid: &Grid2D, levels: &[f64], solver: &SolverOptions) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Domain("need at least one pension level".into()));
        }
        if levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("pension levels must be strictly increasing".into()));
        }
        let solver = SolverOptions { retention: Retention::Ends, ..*solver };
        let values = levels
            .par_iter()
            .map(|&pi| {
                let p = ModelParams { pi, ..*params };
                solve_with(&p, grid, &solver).map(|s| s.initial().value.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            params: ModelParams { pi: levels[0], ..*params },
            levels: levels.to_vec(),
            values,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `V(0, w, cbar_k)` at pension level `i`, linear in `w`.
    pub fn level_value(&self, i: usize, w: f64, k: usize) -> f64 {
        let axis = &self.grid.w_axis;
        let (j, s, _) = axis.locate(w);
        let row = &self.values[i][k * axis.len()..(k + 1) * axis.len()];
        (1.0 - s) * row[j] + s * row[j + 1]
    }

    /// `V(0, w, cbar_k)` at pension `pi`: exact at a solved level, otherwise
    /// cubic Lagrange through the nearest levels.
    pub fn value0(&self, w: f64, k: usize, pi: f64) -> Result<f64> {
        let lv = &self.levels;
        let span = (lv[lv.len() - 1] - lv[0]).max(1.0);
        if let Some(i) = lv.iter().position(|l| (l - pi).abs() <= 1e-12 * span) {
            return Ok(self.level_value(i, w, k));
        }
        if pi < lv[0] || pi > lv[lv.len() - 1] {
            return Err(Error::Domain(format!(
                "pension {pi} outside the solved range [{}, {}]",
                lv[0],
                lv[lv.len() - 1]
            )));
        }
        let width = lv.len().min(4);
        let above = lv.partition_point(|l| *l < pi);
        let start = above.saturating_sub(width / 2).min(lv.len() - width);
        let nodes = start..start + width;
        let mut out = 0.0;
        for i in nodes.clone() {
            let basis: f64 = nodes.clone().filter(|m| *m != i).map(|m| (pi - lv[m]) / (lv[i] - lv[m])).product();
            out += basis * self.level_value(i, w, k);
        }
        Ok(out)
    }

    /// Nodes where a higher pension gives a lower value by more than `tol`
    /// (relative). More income can never hurt, so this should be empty.
    pub fn dominance_violations(&self, tol: f64) -> Vec<(usize, usize, usize)> {
        let n_w = self.grid.n_w();
        let mut out = Vec::new();
        for i in 1..self.levels.len() {
            for (idx, (lo, hi)) in self.values[i - 1].iter().zip(&self.values[i]).enumerate() {
                if *hi < *lo - tol * lo.abs() {
                    out.push((i, idx % n_w, idx / n_w));
                }
            }
        }
        out
    }
}

/// The utility difference of annuitizing along the wealth axis at one habit
/// level.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnuitizeResult {
    pub rule: DeltaWRule,
    pub annuity_factor: f64,
    /// Habit node actually used (the grid node nearest the request).
    pub cbar: f64,
    /// `(w, dV)` at the wealth nodes where the rule is feasible.
    pub curve: Vec<(f64, f64)>,
    /// First wealth, scanning upwards, where `dV` changes sign.
    pub crossing: Option<f64>,
    /// Set when the curve changes sign more than once.
    pub multiple_crossings: bool,
    pub params: ModelParams,
}

/// Evaluates `dV` at the wealth nodes of `grid` for habit `cbar`.
pub fn delta_v_curve(params: &ModelParams, grid: &Grid2D, cbar: f64, opts: &AnnuityOptions) -> Result<AnnuitizeResult> {
    Ok(delta_v_curves(params, grid, &[cbar], opts)?.remove(0))
}

/// [`delta_v_curve`] for several habit levels, sharing the value solves.
pub fn delta_v_curves(
    params: &ModelParams,
    grid: &Grid2D,
    cbars: &[f64],
    opts: &AnnuityOptions,
) -> Result<Vec<AnnuitizeResult>> {
    params.validate()?;
    opts.rule.validate()?;
    let a_x = params.annuity_factor()?;
    let w_top = opts.w_max_eval.unwrap_or(grid.w_axis.hi());
    let rule = opts.rule;
    let points: Vec<f64> = grid
        .w_axis
        .nodes()
        .iter()
        .copied()
        .filter(|&w| w <= w_top && rule.amount(w) <= w)
        .collect();
    if points.len() < 2 {
        return Err(Error::Domain("fewer than two wealth nodes where the rule applies".into()));
    }
    let top_pension = params.pi + points.iter().map(|&w| rule.amount(w)).fold(0.0, f64::max) / a_x;
    let mut levels = match rule {
        DeltaWRule::Fixed(_) => vec![params.pi, top_pension],
        _ => {
            let n = opts.pension_levels.max(2);
            (0..n).map(|i| params.pi + (top_pension - params.pi) * i as f64 / (n - 1) as f64).collect()
        }
    };
    levels.dedup();
    let family = PensionFamily::solve(params, grid, &levels, &opts.solver)?;

    cbars
        .iter()
        .map(|&cbar| {
            let k = grid.c_axis.nearest(cbar);
            let delta = |w: f64| -> Result<f64> {
                let dw = rule.amount(w);
                Ok(family.value0(w, k, params.pi)? - family.value0(w - dw, k, params.pi + dw / a_x)?)
            };
            let curve = points.iter().map(|&w| Ok((w, delta(w)?))).collect::<Result<Vec<_>>>()?;
            let brackets: Vec<usize> = (1..curve.len()).filter(|&i| curve[i - 1].1 * curve[i].1 < 0.0).collect();
            let multiple_crossings = brackets.len() > 1;
            if multiple_crossings {
                warn!("annuity difference changes sign {} times; reporting the first", brackets.len());
            }
            let crossing = match brackets.first() {
                Some(&i) => Some(bisect(&delta, &family, k, params.pi, curve[i - 1], curve[i])?),
                None => None,
            };
            Ok(AnnuitizeResult {
                rule,
                annuity_factor: a_x,
                cbar: grid.c_axis.nodes()[k],
                curve,
                crossing,
                multiple_crossings,
                params: *params,
            })
        })
        .collect()
}

/// Narrows a sign change of `delta` until `|dV| <= 1e-6 |V|`.
fn bisect(
    delta: &impl Fn(f64) -> Result<f64>,
    family: &PensionFamily,
    k: usize,
    pi: f64,
    (mut lo, mut f_lo): (f64, f64),
    (mut hi, _): (f64, f64),
) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = delta(mid)?;
        let scale = family.value0(mid, k, pi)?.abs();
        if f.abs() <= 1e-6 * scale || hi - lo <= f64::EPSILON * hi.abs() {
            return Ok(mid);
        }
        if f * f_lo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub crossing: Option<f64>,
    pub multiple_crossings: bool,
    pub cbar: f64,
}

/// Smallest wealth at which the annuity difference changes sign, or `None`
/// when it keeps one sign over the evaluated range.
pub fn annuitization_threshold(
    params: &ModelParams,
    grid: &Grid2D,
    cbar: f64,
    opts: &AnnuityOptions,
) -> Result<Threshold> {
    let r = delta_v_curve(params, grid, cbar, opts)?;
    Ok(Threshold { crossing: r.crossing, multiple_crossings: r.multiple_crossings, cbar: r.cbar })
}

/// Liquid wealth worth as much as annuitizing all of `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct AewResult {
    pub w: f64,
    pub w_hat: Option<f64>,
    /// `V(0, 0, cbar; pi + w / a_x)`.
    pub target: f64,
    /// `V(0, w_hat, cbar; pi) - target`, zero when no solution exists.
    pub mismatch: f64,
    /// Why `w_hat` is missing.
    pub note: Option<String>,
}

/// Annuity-equivalent wealth for each of `wealth` at habit `cbar`.
pub fn aew_many(
    params: &ModelParams,
    grid: &Grid2D,
    cbar: f64,
    wealth: &[f64],
    solver: &SolverOptions,
) -> Result<Vec<AewResult>> {
    params.validate()?;
    if let Some(w) = wealth.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::Domain(format!("wealth must be non-negative, got {w}")));
    }
    let a_x = params.annuity_factor()?;
    let k = grid.c_axis.nearest(cbar);
    let mut levels: Vec<f64> = wealth.iter().map(|w| params.pi + w / a_x).collect();
    levels.push(params.pi);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let family = PensionFamily::solve(params, grid, &levels, solver)?;

    // the far row copies its neighbour, so the slice is only strictly
    // increasing up to the last interior node
    let n_w = grid.n_w() - 1;
    let slice: Vec<f64> = (0..n_w).map(|j| family.level_value(0, grid.w_axis.nodes()[j], k)).collect();
    if let Some(j) = (1..n_w).find(|&j| !(slice[j] > slice[j - 1])) {
        return Err(Error::Domain(format!("value slice is not strictly increasing at wealth node {j}")));
    }
    let nodes = grid.w_axis.nodes();
    wealth
        .iter()
        .map(|&w| {
            let target = family.value0(0.0, k, params.pi + w / a_x)?;
            if target < slice[0] || target > slice[n_w - 1] {
                let note = format!(
                    "target {target} outside the value range [{}, {}] of the wealth axis",
                    slice[0],
                    slice[n_w - 1]
                );
                warn!("{note}");
                return Ok(AewResult { w, w_hat: None, target, mismatch: 0.0, note: Some(note) });
            }
            // bisect for the bracketing cell, then invert the linear piece
            let j = slice.partition_point(|v| *v < target).clamp(1, n_w - 1);
            let s = (target - slice[j - 1]) / (slice[j] - slice[j - 1]);
            let w_hat = nodes[j - 1] + s * (nodes[j] - nodes[j - 1]);
            let mismatch = family.level_value(0, w_hat, k) - target;
            Ok(AewResult { w, w_hat: Some(w_hat), target, mismatch, note: None })
        })
        .collect()
}

pub fn aew(params: &ModelParams, grid: &Grid2D, cbar: f64, w: f64, solver: &SolverOptions) -> Result<AewResult> {
    Ok(aew_many(params, grid, cbar, &[w], solver)?.remove(0))
}
