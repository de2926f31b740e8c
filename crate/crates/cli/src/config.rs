//! Flat `key = value` run configuration.
//!
//! Keys carry a section prefix (`model.eta`, `grid.n_w`, ...). Blank lines
//! and `#` comments are ignored. Lists are comma separated; an empty value
//! is an empty list. Optional numbers accept `none` (or `auto` for the step
//! count).

use std::fmt::Display;
use std::path::{Path, PathBuf};

use habit_core::annuity::{AnnuityOptions, DeltaWRule};
use habit_core::convergence::{Axis, ConvergenceConfig, NodeSet};
use habit_core::montecarlo::SimConfig;
use habit_core::numerics::Grid2D;
use habit_core::pension::{Retention, SolverOptions};
use habit_core::scaled::{ScaledGrid, ScaledOptions, ThetaMode};
use habit_core::ModelParams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("config key `{key}`: cannot parse `{value}`: {reason}")]
    BadValue { key: String, value: String, reason: String },

    #[error(transparent)]
    Invalid(#[from] habit_core::Error),
}

impl ConfigError {
    fn bad(key: &str, value: &str, reason: impl Display) -> Self {
        ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.to_string() }
    }

    fn invalid(key: &str, value: impl Display, reason: &str) -> Self {
        Self::bad(key, &value.to_string(), reason)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub w_max: f64,
    pub n_w: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub n_c: usize,
    /// `None` picks 1000 steps for `eta <= 0.01` and 40000 otherwise.
    pub n_time: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { w_max: 150.0, n_w: 513, c_min: 0.1, c_max: 30.0, n_c: 80, n_time: None }
    }
}

/// Step count used when none is configured.
pub fn auto_steps(eta: f64) -> usize {
    if eta <= 0.01 {
        1000
    } else {
        40_000
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledConfig {
    pub xs_max: f64,
    pub n_xs: usize,
    pub n_time: usize,
    pub theta_mode: ThetaMode,
}

impl Default for ScaledConfig {
    fn default() -> Self {
        Self { xs_max: 100.0, n_xs: 513, n_time: 40_000, theta_mode: ThetaMode::Fixed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WdtConfig {
    pub w0: Vec<f64>,
    pub cbar0: Vec<f64>,
}

impl Default for WdtConfig {
    fn default() -> Self {
        Self { w0: vec![1.0, 5.0, 10.0, 20.0, 35.0, 50.0, 75.0], cbar0: vec![10.0] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnuityConfig {
    pub rule: DeltaWRule,
    pub cbar: Vec<f64>,
    pub w_max_eval: Option<f64>,
    pub pension_levels: usize,
    /// Wealth levels at which the annuity-equivalent wealth is reported.
    pub aew_w: Vec<f64>,
}

impl Default for AnnuityConfig {
    fn default() -> Self {
        Self {
            rule: DeltaWRule::default(),
            cbar: vec![1.0, 5.0, 10.0],
            w_max_eval: Some(40.0),
            pension_levels: 7,
            aew_w: vec![0.0, 5.0, 10.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSettings {
    pub axis: Axis,
    pub intervals: Vec<usize>,
    pub fixed_nodes: usize,
    pub n_time_overrides: Vec<(usize, usize)>,
    pub eval_time: f64,
    pub node_set: NodeSet,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            axis: Axis::Wealth,
            intervals: vec![64, 128, 256, 512, 1024],
            fixed_nodes: 80,
            n_time_overrides: Vec::new(),
            eval_time: 0.0,
            node_set: NodeSet::Coarsest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// `None` sweeps the single model value.
    pub eta: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
    /// Habit levels of the consumption-versus-wealth curves.
    pub cbar: Vec<f64>,
    /// Wealth levels of the consumption-versus-habit curves.
    pub w: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { eta: None, theta: None, sigma: None, cbar: vec![1.0, 5.0, 20.0], w: vec![1.0, 30.0, 60.0] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridConfig,
    pub solver: SolverOptions,
    /// Years between emitted time slices; `None` emits only `t = 0`.
    pub slice_years: Option<f64>,
    pub scaled: ScaledConfig,
    pub sim: SimConfig,
    pub wdt: WdtConfig,
    pub annuity: AnnuityConfig,
    pub convergence: ConvergenceSettings,
    pub sweep: SweepConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            grid: GridConfig::default(),
            solver: SolverOptions::default(),
            slice_years: None,
            scaled: ScaledConfig::default(),
            sim: SimConfig::default(),
            wdt: WdtConfig::default(),
            annuity: AnnuityConfig::default(),
            convergence: ConvergenceSettings::default(),
            sweep: SweepConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    v.parse::<T>().map_err(|e| ConfigError::bad(key, v, e))
}

fn opt_num<T: std::str::FromStr>(key: &str, v: &str, word: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: Display,
{
    if v.eq_ignore_ascii_case(word) {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: Display,
{
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn fmt_list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_opt<T: Display>(v: &Option<T>, word: &str) -> String {
    v.as_ref().map_or(word.to_string(), |x| x.to_string())
}

fn fmt_opt_list<T: Display>(v: &Option<Vec<T>>) -> String {
    v.as_ref().map_or("model".to_string(), |l| fmt_list(l))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Rebuilds the configuration recorded in the comment header of an
    /// emitted CSV file.
    pub fn from_header(text: &str) -> Result<Self, ConfigError> {
        let body: Vec<&str> = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .filter_map(|l| l.strip_prefix("# "))
            .filter(|l| l.contains(" = "))
            .collect();
        let mut cfg = Self::default();
        cfg.apply_text(&body.join("\n"))?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text` in order.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.trim().to_string() })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let m = &mut self.model;
        match key {
            "model.r" => m.r = num(key, v)?,
            "model.mu" => m.mu = num(key, v)?,
            "model.sigma" => m.sigma = num(key, v)?,
            "model.theta" => m.theta = num(key, v)?,
            "model.gamma" => m.gamma = num(key, v)?,
            "model.rho" => m.rho = num(key, v)?,
            "model.eta" => m.eta = num(key, v)?,
            "model.pi" => m.pi = num(key, v)?,
            "model.retire_age" => m.retire_age = num(key, v)?,
            "model.gompertz_m" => m.gompertz_m = num(key, v)?,
            "model.gompertz_b" => m.gompertz_b = num(key, v)?,
            "model.horizon" => m.horizon = num(key, v)?,

            "grid.w_max" => self.grid.w_max = num(key, v)?,
            "grid.n_w" => self.grid.n_w = num(key, v)?,
            "grid.c_min" => self.grid.c_min = num(key, v)?,
            "grid.c_max" => self.grid.c_max = num(key, v)?,
            "grid.n_c" => self.grid.n_c = num(key, v)?,
            "grid.n_time" => self.grid.n_time = opt_num(key, v, "auto")?,

            "solver.marginal_floor" => self.solver.marginal_floor = num(key, v)?,
            "solver.consumption_cap" => self.solver.consumption_cap = opt_num(key, v, "none")?,
            "output.slice_years" => self.slice_years = opt_num(key, v, "none")?,
            "output.dir" => self.out = PathBuf::from(v),

            "scaled.xs_max" => self.scaled.xs_max = num(key, v)?,
            "scaled.n_xs" => self.scaled.n_xs = num(key, v)?,
            "scaled.n_time" => self.scaled.n_time = num(key, v)?,
            "scaled.theta_mode" => {
                self.scaled.theta_mode = match v {
                    "fixed" => ThetaMode::Fixed,
                    "control" => ThetaMode::Control,
                    _ => return Err(ConfigError::bad(key, v, "expected `fixed` or `control`")),
                }
            }

            "sim.n_paths" => self.sim.n_paths = num(key, v)?,
            "sim.dt_sim" => self.sim.dt_sim = num(key, v)?,
            "sim.seed" => self.sim.seed = num(key, v)?,
            "sim.w0" => self.sim.w0 = num(key, v)?,
            "sim.cbar0" => self.sim.cbar0 = num(key, v)?,
            "sim.depletion_eps" => self.sim.depletion_eps = opt_num(key, v, "none")?,
            "sim.keep_paths" => self.sim.keep_paths = num(key, v)?,
            "sim.sample_every" => self.sim.sample_every = num(key, v)?,

            "wdt.w0" => self.wdt.w0 = list(key, v)?,
            "wdt.cbar0" => self.wdt.cbar0 = list(key, v)?,

            "annuity.rule" => {
                self.annuity.rule = match v {
                    "full" => DeltaWRule::Full,
                    "proportional" => match self.annuity.rule {
                        DeltaWRule::Proportional(f) => DeltaWRule::Proportional(f),
                        _ => DeltaWRule::Proportional(0.1),
                    },
                    "fixed" => match self.annuity.rule {
                        DeltaWRule::Fixed(d) => DeltaWRule::Fixed(d),
                        _ => DeltaWRule::Fixed(1.0),
                    },
                    _ => return Err(ConfigError::bad(key, v, "expected `proportional`, `fixed` or `full`")),
                }
            }
            "annuity.fraction" => self.annuity.rule = DeltaWRule::Proportional(num(key, v)?),
            "annuity.delta_w" => self.annuity.rule = DeltaWRule::Fixed(num(key, v)?),
            "annuity.cbar" => self.annuity.cbar = list(key, v)?,
            "annuity.w_max_eval" => self.annuity.w_max_eval = opt_num(key, v, "none")?,
            "annuity.pension_levels" => self.annuity.pension_levels = num(key, v)?,
            "annuity.aew_w" => self.annuity.aew_w = list(key, v)?,

            "convergence.axis" => {
                self.convergence.axis = match v {
                    "w" => Axis::Wealth,
                    "cbar" => Axis::Habit,
                    _ => return Err(ConfigError::bad(key, v, "expected `w` or `cbar`")),
                }
            }
            "convergence.intervals" => self.convergence.intervals = list(key, v)?,
            "convergence.fixed_nodes" => self.convergence.fixed_nodes = num(key, v)?,
            "convergence.n_time_overrides" => {
                self.convergence.n_time_overrides = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|pair| {
                        let (i, n) = pair
                            .split_once(':')
                            .ok_or_else(|| ConfigError::bad(key, pair, "expected `intervals:steps`"))?;
                        Ok((num(key, i.trim())?, num(key, n.trim())?))
                    })
                    .collect::<Result<_, ConfigError>>()?
            }
            "convergence.eval_time" => self.convergence.eval_time = num(key, v)?,
            "convergence.node_set" => {
                self.convergence.node_set = match v {
                    "coarsest" => NodeSet::Coarsest,
                    "pair" => NodeSet::PairCoarse,
                    _ => return Err(ConfigError::bad(key, v, "expected `coarsest` or `pair`")),
                }
            }

            "sweep.eta" => self.sweep.eta = Some(list(key, v)?),
            "sweep.theta" => self.sweep.theta = Some(list(key, v)?),
            "sweep.sigma" => self.sweep.sigma = Some(list(key, v)?),
            "sweep.cbar" => self.sweep.cbar = list(key, v)?,
            "sweep.w" => self.sweep.w = list(key, v)?,

            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`RunConfig::apply_text`]
    /// reads back to the same configuration.
    pub fn to_lines(&self) -> Vec<String> {
        let m = &self.model;
        let rule = match self.annuity.rule {
            DeltaWRule::Fixed(d) => vec![("annuity.rule", "fixed".to_string()), ("annuity.delta_w", d.to_string())],
            DeltaWRule::Proportional(f) => {
                vec![("annuity.rule", "proportional".to_string()), ("annuity.fraction", f.to_string())]
            }
            DeltaWRule::Full => vec![("annuity.rule", "full".to_string())],
        };
        let mut kv: Vec<(&str, String)> = vec![
            ("model.r", m.r.to_string()),
            ("model.mu", m.mu.to_string()),
            ("model.sigma", m.sigma.to_string()),
            ("model.theta", m.theta.to_string()),
            ("model.gamma", m.gamma.to_string()),
            ("model.rho", m.rho.to_string()),
            ("model.eta", m.eta.to_string()),
            ("model.pi", m.pi.to_string()),
            ("model.retire_age", m.retire_age.to_string()),
            ("model.gompertz_m", m.gompertz_m.to_string()),
            ("model.gompertz_b", m.gompertz_b.to_string()),
            ("model.horizon", m.horizon.to_string()),
            ("grid.w_max", self.grid.w_max.to_string()),
            ("grid.n_w", self.grid.n_w.to_string()),
            ("grid.c_min", self.grid.c_min.to_string()),
            ("grid.c_max", self.grid.c_max.to_string()),
            ("grid.n_c", self.grid.n_c.to_string()),
            ("grid.n_time", fmt_opt(&self.grid.n_time, "auto")),
            ("solver.marginal_floor", self.solver.marginal_floor.to_string()),
            ("solver.consumption_cap", fmt_opt(&self.solver.consumption_cap, "none")),
            ("output.slice_years", fmt_opt(&self.slice_years, "none")),
            ("output.dir", self.out.display().to_string()),
            ("scaled.xs_max", self.scaled.xs_max.to_string()),
            ("scaled.n_xs", self.scaled.n_xs.to_string()),
            ("scaled.n_time", self.scaled.n_time.to_string()),
            (
                "scaled.theta_mode",
                match self.scaled.theta_mode {
                    ThetaMode::Fixed => "fixed",
                    ThetaMode::Control => "control",
                }
                .to_string(),
            ),
            ("sim.n_paths", self.sim.n_paths.to_string()),
            ("sim.dt_sim", self.sim.dt_sim.to_string()),
            ("sim.seed", self.sim.seed.to_string()),
            ("sim.w0", self.sim.w0.to_string()),
            ("sim.cbar0", self.sim.cbar0.to_string()),
            ("sim.depletion_eps", fmt_opt(&self.sim.depletion_eps, "none")),
            ("sim.keep_paths", self.sim.keep_paths.to_string()),
            ("sim.sample_every", self.sim.sample_every.to_string()),
            ("wdt.w0", fmt_list(&self.wdt.w0)),
            ("wdt.cbar0", fmt_list(&self.wdt.cbar0)),
        ];
        kv.extend(rule);
        kv.extend([
            ("annuity.cbar", fmt_list(&self.annuity.cbar)),
            ("annuity.w_max_eval", fmt_opt(&self.annuity.w_max_eval, "none")),
            ("annuity.pension_levels", self.annuity.pension_levels.to_string()),
            ("annuity.aew_w", fmt_list(&self.annuity.aew_w)),
            ("convergence.axis", self.convergence.axis.label().to_string()),
            ("convergence.intervals", fmt_list(&self.convergence.intervals)),
            ("convergence.fixed_nodes", self.convergence.fixed_nodes.to_string()),
            (
                "convergence.n_time_overrides",
                self.convergence.n_time_overrides.iter().map(|(i, n)| format!("{i}:{n}")).collect::<Vec<_>>().join(", "),
            ),
            ("convergence.eval_time", self.convergence.eval_time.to_string()),
            (
                "convergence.node_set",
                match self.convergence.node_set {
                    NodeSet::Coarsest => "coarsest",
                    NodeSet::PairCoarse => "pair",
                }
                .to_string(),
            ),
        ]);
        let mut lines: Vec<String> = kv.into_iter().map(|(k, v)| format!("{k} = {v}")).collect();
        // an absent sweep list means "the model value" and is left out
        let sweeps = [("sweep.eta", &self.sweep.eta), ("sweep.theta", &self.sweep.theta), ("sweep.sigma", &self.sweep.sigma)];
        for (k, v) in sweeps {
            if v.is_some() {
                lines.push(format!("{k} = {}", fmt_opt_list(v)));
            }
        }
        lines.push(format!("sweep.cbar = {}", fmt_list(&self.sweep.cbar)));
        lines.push(format!("sweep.w = {}", fmt_list(&self.sweep.w)));
        lines
    }

    /// Fills in values left to be chosen automatically.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.grid.n_time = Some(self.n_time());
        out
    }

    pub fn n_time(&self) -> usize {
        self.grid.n_time.unwrap_or_else(|| auto_steps(self.model.eta))
    }

    pub fn grid2d(&self) -> Result<Grid2D, ConfigError> {
        let g = &self.grid;
        Ok(Grid2D::uniform(g.w_max, g.n_w, g.c_min, g.c_max, g.n_c, self.n_time(), self.model.horizon)?)
    }

    pub fn scaled_grid(&self) -> Result<ScaledGrid, ConfigError> {
        let s = &self.scaled;
        Ok(ScaledGrid::uniform(s.xs_max, s.n_xs, s.n_time, self.model.horizon)?)
    }

    pub fn retention(&self) -> Retention {
        self.slice_years.map_or(Retention::Ends, Retention::Interval)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { retention: self.retention(), ..self.solver }
    }

    pub fn scaled_options(&self) -> ScaledOptions {
        ScaledOptions {
            marginal_floor: self.solver.marginal_floor,
            retention: self.retention(),
            ..ScaledOptions::default()
        }
    }

    pub fn annuity_options(&self) -> AnnuityOptions {
        AnnuityOptions {
            rule: self.annuity.rule,
            w_max_eval: self.annuity.w_max_eval,
            pension_levels: self.annuity.pension_levels,
            solver: SolverOptions { retention: Retention::Ends, ..self.solver },
        }
    }

    pub fn convergence_config(&self) -> ConvergenceConfig {
        let c = &self.convergence;
        ConvergenceConfig {
            params: self.model,
            axis: c.axis,
            intervals: c.intervals.clone(),
            fixed_nodes: c.fixed_nodes,
            w_max: self.grid.w_max,
            c_min: self.grid.c_min,
            c_max: self.grid.c_max,
            n_time: self.n_time(),
            n_time_overrides: c.n_time_overrides.clone(),
            eval_time: c.eval_time,
            node_set: c.node_set,
            solver: self.solver,
        }
    }

    /// Checks every block so that no solve starts on a bad value.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.sim.validate()?;
        self.annuity.rule.validate()?;
        self.grid2d()?;
        self.scaled_grid()?;
        let positive = [
            ("solver.marginal_floor", self.solver.marginal_floor),
            ("solver.consumption_cap", self.solver.consumption_cap.unwrap_or(1.0)),
            ("output.slice_years", self.slice_years.unwrap_or(1.0)),
            ("annuity.w_max_eval", self.annuity.w_max_eval.unwrap_or(1.0)),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::invalid(key, v, "must be positive"));
            }
        }
        let habit_lists = [("wdt.cbar0", &self.wdt.cbar0), ("annuity.cbar", &self.annuity.cbar), ("sweep.cbar", &self.sweep.cbar)];
        for (key, l) in habit_lists {
            if let Some(c) = l.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
                return Err(ConfigError::invalid(key, c, "habit levels must be positive"));
            }
        }
        let wealth_lists = [("wdt.w0", &self.wdt.w0), ("annuity.aew_w", &self.annuity.aew_w), ("sweep.w", &self.sweep.w)];
        for (key, l) in wealth_lists {
            if let Some(w) = l.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
                return Err(ConfigError::invalid(key, w, "wealth levels must be non-negative"));
            }
        }
        if self.annuity.pension_levels < 2 {
            return Err(ConfigError::invalid("annuity.pension_levels", self.annuity.pension_levels, "need at least 2"));
        }
        let c = &self.convergence;
        if c.intervals.len() < 3 {
            return Err(ConfigError::invalid("convergence.intervals", fmt_list(&c.intervals), "need at least 3 resolutions"));
        }
        if c.intervals.windows(2).any(|p| p[1] != 2 * p[0]) || c.intervals[0] == 0 {
            return Err(ConfigError::invalid(
                "convergence.intervals",
                fmt_list(&c.intervals),
                "each resolution must double the previous",
            ));
        }
        if !(0.0..=self.model.horizon).contains(&c.eval_time) {
            return Err(ConfigError::invalid("convergence.eval_time", c.eval_time, "must lie within the horizon"));
        }
        Ok(())
    }
}
