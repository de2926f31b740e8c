//! Euler–Maruyama simulation of wealth and habit under a tabulated policy.
//!
//! Every path owns an RNG stream derived from the master seed and its index,
//! so results do not depend on how paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{crra, ModelParams};
use crate::pension::ValuePolicySolution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Euler step in years.
    pub dt_sim: f64,
    pub seed: u64,
    pub w0: f64,
    pub cbar0: f64,
    /// Wealth at or below this counts as depleted. `None` uses half the
    /// wealth spacing of the policy grid, the resolution at which the
    /// tabulated solve itself treats wealth as gone.
    pub depletion_eps: Option<f64>,
    /// Number of paths whose trajectories are kept.
    pub keep_paths: usize,
    /// Keep every this many steps of a kept trajectory.
    pub sample_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt_sim: 1.0 / 252.0,
            seed: 42,
            w0: 10.0,
            cbar0: 5.0,
            depletion_eps: None,
            keep_paths: 0,
            sample_every: 21,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(invalid("sim.n_paths", "must be at least 1"));
        }
        if !(self.dt_sim > 0.0) || !self.dt_sim.is_finite() {
            return Err(invalid("sim.dt_sim", "must be positive"));
        }
        if self.depletion_eps.is_some_and(|e| !(e >= 0.0)) {
            return Err(invalid("sim.depletion_eps", "must be non-negative"));
        }
        if !(self.w0 >= 0.0) || !self.w0.is_finite() {
            return Err(invalid("sim.w0", "must be non-negative"));
        }
        if !(self.cbar0 > 0.0) || !self.cbar0.is_finite() {
            return Err(invalid("sim.cbar0", "must be positive"));
        }
        if self.sample_every == 0 {
            return Err(invalid("sim.sample_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// One recorded state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub w: f64,
    pub c: f64,
    pub cbar: f64,
}

/// Per-path results.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    /// First time (years after retirement) wealth fell to the threshold.
    pub depletion_time: Option<f64>,
    pub final_wealth: f64,
    pub final_habit: f64,
    pub consumption_mean: f64,
    pub consumption_std: f64,
    /// Annualised standard deviation of consumption increments while wealth
    /// lasts; zero if it never had a step to move.
    pub consumption_volatility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPaths {
    pub config: SimConfig,
    /// Threshold actually used.
    pub depletion_eps: f64,
    pub horizon: f64,
    pub summaries: Vec<PathSummary>,
    /// Sampled trajectories of the first `keep_paths` paths.
    pub trajectories: Vec<Vec<PathSample>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepletionStats {
    pub mean_age: f64,
    pub std_age: f64,
    pub depleted_fraction: f64,
    /// Paths still holding wealth at the horizon; they count as depleted at
    /// the horizon in the mean and std.
    pub censored_fraction: f64,
    pub n_paths: usize,
}

/// Time-monotone lookup into the retained slices of a policy solve.
struct Cursor<'a> {
    sol: &'a ValuePolicySolution,
    /// Index of the retained slice at or before `t` (slices are ordered by
    /// decreasing time).
    idx: usize,
}

impl<'a> Cursor<'a> {
    fn new(sol: &'a ValuePolicySolution) -> Self {
        Self { sol, idx: sol.snapshots.len() - 1 }
    }

    /// Slice indices bracketing `t` and the weight of the later one.
    fn seek(&mut self, t: f64) -> (usize, usize, f64) {
        let s = &self.sol.snapshots;
        while self.idx > 0 && s[self.idx - 1].t <= t {
            self.idx -= 1;
        }
        let lo = self.idx;
        if lo == 0 || s[lo].t >= t {
            return (lo, lo, 0.0);
        }
        let hi = lo - 1;
        let wgt = (t - s[lo].t) / (s[hi].t - s[lo].t);
        (lo, hi, wgt)
    }

    fn eval(&mut self, t: f64, w: f64, cbar: f64, value: bool) -> f64 {
        let (mut lo, hi, wgt) = self.seek(t);
        let s = &self.sol.snapshots;
        if !value && s[lo].step == 0 && s.len() > 1 {
            lo = 1;
        }
        let pick = |i: usize| if value { &s[i].value } else { &s[i].policy };
        let a = crate::pension::bilinear(&self.sol.grid, pick(lo), w, cbar);
        // the terminal policy is the consumption cap (V(T) = 0 leaves no
        // marginal value), so the last interval holds the policy before it
        if wgt == 0.0 || (!value && s[hi].step == 0) {
            return a;
        }
        let b = crate::pension::bilinear(&self.sol.grid, pick(hi), w, cbar);
        (1.0 - wgt) * a + wgt * b
    }
}

fn check_inputs(policy: &ValuePolicySolution, cfg: &SimConfig, params: &ModelParams) -> Result<()> {
    cfg.validate()?;
    params.validate()?;
    if params != &policy.params {
        return Err(Error::GridMismatch("parameters differ from those of the policy solve".into()));
    }
    Ok(())
}

/// Path `index` of a run seeded with `seed`.
fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Consumption actually taken at state `(w, cbar)`: the tabulated policy
/// times `scale`, restricted to the pension once wealth is gone.
#[inline]
fn consumption(raw: f64, scale: f64, w: f64, pi: f64) -> f64 {
    let c = (raw * scale).max(0.0);
    if w <= 0.0 {
        c.min(pi)
    } else {
        c
    }
}

/// One Euler step; returns the new `(w, cbar)`.
#[inline]
fn euler(p: &ModelParams, w: f64, cbar: f64, c: f64, dt: f64, sqrt_dt: f64, z: f64) -> (f64, f64) {
    let drift = p.portfolio_drift() * w + p.pi - c;
    let w_next = (w + drift * dt + p.theta * p.sigma * w * sqrt_dt * z).max(0.0);
    let cbar_next = cbar + p.eta * (c - cbar) * dt;
    (w_next, cbar_next)
}

/// Simulates `cfg.n_paths` independent paths from `(w0, cbar0)` at `t = 0`
/// to the horizon under the solved policy.
pub fn simulate_paths(policy: &ValuePolicySolution, cfg: &SimConfig, params: &ModelParams) -> Result<SimPaths> {
    simulate_scaled(policy, cfg, params, 1.0)
}

/// As [`simulate_paths`] with the policy multiplied by `scale`.
pub fn simulate_scaled(
    policy: &ValuePolicySolution,
    cfg: &SimConfig,
    params: &ModelParams,
    scale: f64,
) -> Result<SimPaths> {
    run(policy, cfg, params, scale, 1)
}

/// Each step's Brownian increment is built from `draws` normals, so a run
/// with `draws = 2` shares its noise with a run at half the step.
fn run(policy: &ValuePolicySolution, cfg: &SimConfig, params: &ModelParams, scale: f64, draws: usize) -> Result<SimPaths> {
    check_inputs(policy, cfg, params)?;
    let horizon = params.horizon;
    let n_steps = (horizon / cfg.dt_sim).round().max(1.0) as usize;
    let dt = horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let norm = 1.0 / (draws as f64).sqrt();
    let eps = cfg.depletion_eps.unwrap_or(0.5 * policy.grid.w_axis.spacing());
    let results: Vec<(PathSummary, Option<Vec<PathSample>>)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let mut cursor = Cursor::new(policy);
            let keep = i < cfg.keep_paths;
            let mut samples = Vec::new();
            let (mut w, mut cbar) = (cfg.w0, cfg.cbar0);
            let mut tau = (w <= eps).then_some(0.0);
            // running mean and variance of consumption
            let (mut mean, mut m2) = (0.0, 0.0);
            // and of its increments before depletion
            let (mut n_inc, mut inc_mean, mut inc_m2) = (0usize, 0.0, 0.0);
            let mut prev_c: Option<f64> = None;
            for n in 0..n_steps {
                let t = n as f64 * dt;
                let c = consumption(cursor.eval(t, w, cbar, false), scale, w, params.pi);
                let delta = c - mean;
                mean += delta / (n + 1) as f64;
                m2 += delta * (c - mean);
                if let Some(pc) = prev_c.filter(|_| tau.is_none()) {
                    let inc = c - pc;
                    n_inc += 1;
                    let d = inc - inc_mean;
                    inc_mean += d / n_inc as f64;
                    inc_m2 += d * (inc - inc_mean);
                }
                prev_c = Some(c);
                if keep && n % cfg.sample_every == 0 {
                    samples.push(PathSample { t, w, c, cbar });
                }
                let z = (0..draws).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).sum::<f64>() * norm;
                (w, cbar) = euler(params, w, cbar, c, dt, sqrt_dt, z);
                if tau.is_none() && w <= eps {
                    tau = Some((n + 1) as f64 * dt);
                }
            }
            if keep {
                let c = consumption(cursor.eval(horizon, w, cbar, false), scale, w, params.pi);
                samples.push(PathSample { t: horizon, w, c, cbar });
            }
            let summary = PathSummary {
                depletion_time: tau,
                final_wealth: w,
                final_habit: cbar,
                consumption_mean: mean,
                consumption_std: (m2 / n_steps as f64).sqrt(),
                consumption_volatility: if n_inc > 1 { (inc_m2 / n_inc as f64 / dt).sqrt() } else { 0.0 },
            };
            (summary, keep.then_some(samples))
        })
        .collect();
    let mut summaries = Vec::with_capacity(results.len());
    let mut trajectories = Vec::new();
    for (s, t) in results {
        summaries.push(s);
        if let Some(t) = t {
            trajectories.push(t);
        }
    }
    Ok(SimPaths { config: *cfg, depletion_eps: eps, horizon, summaries, trajectories })
}

/// Mean and standard deviation of the depletion age over paths; paths that
/// never deplete count as depleting at the horizon.
pub fn depletion_stats(paths: &SimPaths, params: &ModelParams) -> Result<DepletionStats> {
    let n = paths.summaries.len();
    if n == 0 {
        return Err(Error::Domain("depletion statistics need at least one path".into()));
    }
    let ages: Vec<f64> = paths
        .summaries
        .iter()
        .map(|s| params.retire_age + s.depletion_time.unwrap_or(paths.horizon))
        .collect();
    let depleted = paths.summaries.iter().filter(|s| s.depletion_time.is_some()).count();
    let mean = ages.iter().sum::<f64>() / n as f64;
    let var = ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(DepletionStats {
        mean_age: mean,
        std_age: var.sqrt(),
        depleted_fraction: depleted as f64 / n as f64,
        censored_fraction: (n - depleted) as f64 / n as f64,
        n_paths: n,
    })
}

/// Sample mean and standard error of the martingale statistic at one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleProbe {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
}

/// Tracks `Y_t = e^{-rho t} p(t) V(t, w_t, cbar_t) + int_0^t e^{-rho s} p(s)
/// u(c_s / cbar_s) ds` along simulated paths (left-point rule for the
/// integral, survival `p` from the mortality law) and reports its sample
/// mean and standard error at each probe time. Under the optimal policy `Y`
/// is a martingale; under any other it drifts down.
pub fn martingale_check(
    policy: &ValuePolicySolution,
    cfg: &SimConfig,
    params: &ModelParams,
    probe_times: &[f64],
    policy_scale: f64,
) -> Result<Vec<MartingaleProbe>> {
    check_inputs(policy, cfg, params)?;
    let horizon = params.horizon;
    if let Some(bad) = probe_times.iter().find(|t| !(0.0..=horizon).contains(*t)) {
        return Err(Error::Domain(format!("probe time {bad} outside [0, {horizon}]")));
    }
    let n_steps = (horizon / cfg.dt_sim).round().max(1.0) as usize;
    let dt = horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let probe_steps: Vec<usize> = probe_times.iter().map(|t| (t / dt).round() as usize).collect();
    let last = probe_steps.iter().copied().max().unwrap_or(0);
    let g = params.gamma;

    let per_path: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let mut cursor = Cursor::new(policy);
            let (mut w, mut cbar) = (cfg.w0, cfg.cbar0);
            let mut running = 0.0;
            let mut out = vec![0.0; probe_steps.len()];
            for n in 0..=last {
                let t = n as f64 * dt;
                let weight = (-params.rho * t - params.cumulative_hazard(t)).exp();
                for (slot, &s) in out.iter_mut().zip(&probe_steps) {
                    if s == n {
                        *slot = running + weight * cursor.eval(t, w, cbar, true);
                    }
                }
                if n == last {
                    break;
                }
                let c = consumption(cursor.eval(t, w, cbar, false), policy_scale, w, params.pi);
                running += weight * crra(c / cbar, g) * dt;
                let z: f64 = StandardNormal.sample(&mut rng);
                (w, cbar) = euler(params, w, cbar, c, dt, sqrt_dt, z);
            }
            out
        })
        .collect();

    let n = per_path.len() as f64;
    Ok(probe_times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mean = per_path.iter().map(|v| v[i]).sum::<f64>() / n;
            let var = per_path.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            MartingaleProbe { t, mean, std_error: (var / n).sqrt() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_names_keys() {
        let bad = SimConfig { n_paths: 0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { key: "sim.n_paths", .. })));
        let bad = SimConfig { dt_sim: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { key: "sim.dt_sim", .. })));
        let bad = SimConfig { depletion_eps: Some(-1.0), ..Default::default() };
        assert!(bad.validate().is_err());
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn streams_differ_and_repeat() {
        use rand::Rng;
        let a: u64 = path_rng(7, 0).next_u64();
        let b: u64 = path_rng(7, 1).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, path_rng(7, 0).next_u64());
    }

    #[test]
    fn consumption_is_limited_to_pension_when_broke() {
        assert_eq!(consumption(3.0, 1.0, 0.0, 1.0), 1.0);
        assert_eq!(consumption(3.0, 0.5, 2.0, 1.0), 1.5);
        assert_eq!(consumption(-1.0, 1.0, 2.0, 1.0), 0.0);
    }

    #[test]
    fn all_paths_depleted_at_the_same_time() {
        let summaries = vec![
            PathSummary {
                depletion_time: Some(10.0),
                final_wealth: 0.0,
                final_habit: 1.0,
                consumption_mean: 1.0,
                consumption_std: 0.0,
                consumption_volatility: 0.0,
            };
            4
        ];
        let paths = SimPaths { config: SimConfig::default(), depletion_eps: 0.1, horizon: 55.0, summaries, trajectories: vec![] };
        let s = depletion_stats(&paths, &ModelParams::default()).unwrap();
        assert_eq!(s.mean_age, 75.0);
        assert_eq!(s.std_age, 0.0);
        assert_eq!(s.censored_fraction, 0.0);
    }

    #[test]
    fn halving_the_step_moves_the_mean_less_than_the_noise() {
        use crate::numerics::Grid2D;
        use crate::pension::solve;
        let p = ModelParams { eta: 0.1, ..Default::default() };
        let g = Grid2D::uniform(100.0, 101, 0.5, 20.0, 40, 1100, p.horizon).unwrap();
        let sol = solve(&p, &g).unwrap();
        let cfg = SimConfig { n_paths: 10_000, dt_sim: 1.0 / 52.0, w0: 10.0, cbar0: 5.0, ..Default::default() };
        let coarse = depletion_stats(&run(&sol, &cfg, &p, 1.0, 2).unwrap(), &p).unwrap();
        let fine_cfg = SimConfig { dt_sim: cfg.dt_sim / 2.0, ..cfg };
        let fine = depletion_stats(&run(&sol, &fine_cfg, &p, 1.0, 1).unwrap(), &p).unwrap();
        let std_error = fine.std_age / (fine.n_paths as f64).sqrt();
        assert!(
            (coarse.mean_age - fine.mean_age).abs() < std_error,
            "coarse {} fine {} se {std_error}",
            coarse.mean_age,
            fine.mean_age
        );
    }
}
