//! Market, preference, mortality and pension constants, together with the
//! Gompertz survival law, CRRA utility and the life-annuity price.
//!
//! Throughout the crate `retire_age` is the age `x` at which the clock
//! `t = 0` starts; scaled wealth `w / cbar` is always called `xs`.

use crate::error::{invalid, Error, Result};

/// All model constants. Rates are per year, wealth and pension are in the
/// same (arbitrary) currency unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Risk-free rate.
    pub r: f64,
    /// Drift of the risky asset.
    pub mu: f64,
    /// Volatility of the risky asset.
    pub sigma: f64,
    /// Fraction of wealth held in the risky asset.
    pub theta: f64,
    /// Relative risk aversion; must differ from one.
    pub gamma: f64,
    /// Subjective discount rate.
    pub rho: f64,
    /// Habit smoothing factor.
    pub eta: f64,
    /// Pension income per year.
    pub pi: f64,
    /// Age at retirement (time origin).
    pub retire_age: f64,
    /// Gompertz modal age of death.
    pub gompertz_m: f64,
    /// Gompertz dispersion.
    pub gompertz_b: f64,
    /// Planning horizon in years after retirement.
    pub horizon: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            r: 0.02,
            mu: 0.08,
            sigma: 0.16,
            theta: 0.6,
            gamma: 3.0,
            rho: 0.02,
            eta: 1.0,
            pi: 1.0,
            retire_age: 65.0,
            gompertz_m: 89.335,
            gompertz_b: 9.5,
            horizon: 55.0,
        }
    }
}

impl ModelParams {
    /// Checks every invariant and names the first offending field.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("model.r", self.r),
            ("model.mu", self.mu),
            ("model.sigma", self.sigma),
            ("model.theta", self.theta),
            ("model.gamma", self.gamma),
            ("model.rho", self.rho),
            ("model.eta", self.eta),
            ("model.pi", self.pi),
            ("model.retire_age", self.retire_age),
            ("model.gompertz_m", self.gompertz_m),
            ("model.gompertz_b", self.gompertz_b),
            ("model.horizon", self.horizon),
        ];
        for (key, v) in fields {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        if self.sigma <= 0.0 {
            return Err(invalid("model.sigma", "must be positive"));
        }
        if self.gompertz_b <= 0.0 {
            return Err(invalid("model.gompertz_b", "must be positive"));
        }
        if self.gamma <= 0.0 || (self.gamma - 1.0).abs() < 1e-12 {
            return Err(invalid("model.gamma", "must be positive and different from 1"));
        }
        if self.horizon <= 0.0 {
            return Err(invalid("model.horizon", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid("model.theta", "must lie in [0, 1]"));
        }
        if self.eta < 0.0 {
            return Err(invalid("model.eta", "must be non-negative"));
        }
        if self.pi < 0.0 {
            return Err(invalid("model.pi", "must be non-negative"));
        }
        Ok(())
    }

    /// Expected return of the portfolio, `theta (mu - r) + r`.
    pub fn portfolio_drift(&self) -> f64 {
        self.theta * (self.mu - self.r) + self.r
    }

    /// Instantaneous variance rate of the portfolio, `theta^2 sigma^2`.
    pub fn portfolio_variance(&self) -> f64 {
        self.theta * self.theta * self.sigma * self.sigma
    }

    /// Gompertz force of mortality at `age`.
    pub fn hazard_rate(&self, age: f64) -> f64 {
        (1.0 / self.gompertz_b) * ((age - self.gompertz_m) / self.gompertz_b).exp()
    }

    /// Hazard at `s` years after retirement.
    pub fn hazard_after(&self, s: f64) -> f64 {
        self.hazard_rate(self.retire_age + s)
    }

    /// Integrated hazard over `[0, s]` after retirement, in closed form.
    pub fn cumulative_hazard(&self, s: f64) -> f64 {
        let b = self.gompertz_b;
        ((self.retire_age - self.gompertz_m) / b).exp() * (s / b).exp_m1()
    }

    /// Probability of surviving `s` years past retirement.
    pub fn survival_prob(&self, s: f64) -> Result<f64> {
        if s.is_nan() || s < 0.0 {
            return Err(Error::Domain(format!("survival time must be >= 0, got {s}")));
        }
        Ok((-self.cumulative_hazard(s)).exp())
    }

    /// Price at retirement of one unit of income paid continuously for life.
    ///
    /// Integrates the discounted survival curve numerically; the upper limit
    /// is the time at which the integrated hazard exceeds 745 (where `exp`
    /// underflows), so the truncation is below `f64` resolution.
    pub fn annuity_factor(&self) -> Result<f64> {
        let b = self.gompertz_b;
        let scale = ((self.retire_age - self.gompertz_m) / b).exp();
        let upper = b * (1.0 + 745.0 / scale).ln();
        let r = self.r;
        let f = |t: f64| (-r * t - self.cumulative_hazard(t)).exp();
        let out = quadrature::integrate(f, 0.0, upper, 1e-13);
        let rel = out.error_estimate / out.integral.abs().max(f64::MIN_POSITIVE);
        if !out.integral.is_finite() || out.integral <= 0.0 || rel > 1e-9 {
            return Err(Error::Quadrature(format!(
                "annuity factor: integral {} with error estimate {}",
                out.integral, out.error_estimate
            )));
        }
        Ok(out.integral)
    }

    /// Remaining life expectancy at retirement.
    pub fn life_expectancy(&self) -> Result<f64> {
        Self { r: 0.0, ..*self }.annuity_factor()
    }
}

/// CRRA utility `q^(1-gamma) / (1-gamma)` of a consumption ratio.
pub fn crra_utility(q: f64, gamma: f64) -> Result<f64> {
    if q.is_nan() || q <= 0.0 {
        return Err(Error::Domain(format!("utility needs a positive argument, got {q}")));
    }
    Ok(crra(q, gamma))
}

#[inline]
pub(crate) fn crra(q: f64, gamma: f64) -> f64 {
    q.powf(1.0 - gamma) / (1.0 - gamma)
}
