//! Inter-sample timing: the clock ODE, its closed-form decay times, and
//! selection/validation of the sampling-period / triggering parameter tuples.
//!
//! The scalar clock phi obeys
//!
//! ```text
//! phi' = -2*mu*phi - gamma*(phi^2 + 1),    phi(0) = 1/lambda
//! ```
//!
//! and decreases monotonically. `inter_sample_time` is the exact time for phi
//! to reach `lambda`; `max_sampling_period` is the limit of that time as
//! `lambda -> 0`, the longest admissible sampling period.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("sampling period h={h} is not admissible: must lie in (0, {t_max})")]
    InfeasiblePeriod { h: f64, t_max: f64 },
    #[error("numeric domain violation: {0}")]
    NumericDomain(String),
    #[error("triggering constraint violated: (1+s)*lambda^2 = {0} >= 1")]
    ConstraintViolation(f64),
    #[error("parameter selection failed: {0}")]
    SelectionFailure(String),
}

/// Decay/coupling rates (mu, gamma) of the clock ODE. Both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingBase {
    pub mu: f64,
    pub gamma: f64,
}

/// Relative gap below which gamma/mu is treated as exactly 1 to avoid
/// catastrophic cancellation in `r = sqrt(|(gamma/mu)^2 - 1|)`.
const EQUAL_BRANCH_TOL: f64 = 1e-9;

/// Residual tolerance of the bisection in `solve_lambda`.
const LAMBDA_RESIDUAL_TOL: f64 = 1e-10;

/// Tolerance for accepting an externally supplied (lambda, h) pairing;
/// printed design tuples are rounded to a few decimals, so the pairing
/// holds only to about this level.
pub const PAIRING_TOL: f64 = 1e-3;

impl TimingBase {
    pub fn new(mu: f64, gamma: f64) -> Result<Self, TimingError> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(TimingError::Domain(format!("mu must be > 0, got {mu}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(TimingError::Domain(format!(
                "gamma must be > 0, got {gamma}"
            )));
        }
        Ok(TimingBase { mu, gamma })
    }

    fn ratio(&self) -> f64 {
        self.gamma / self.mu
    }

    fn equal_branch(&self) -> bool {
        (self.ratio() - 1.0).abs() < EQUAL_BRANCH_TOL
    }

    fn r(&self) -> f64 {
        let rho = self.ratio();
        (rho * rho - 1.0).abs().sqrt()
    }
}

/// Right-hand side of the clock ODE: `-2*mu*phi - gamma*(phi^2 + 1)`.
pub fn phi_rate(phi: f64, base: TimingBase) -> f64 {
    -2.0 * base.mu * phi - base.gamma * (phi * phi + 1.0)
}

/// Longest admissible sampling period for the given rates.
pub fn max_sampling_period(base: TimingBase) -> f64 {
    if base.equal_branch() {
        return 1.0 / base.mu;
    }
    let r = base.r();
    if base.gamma > base.mu {
        r.atan() / (base.mu * r)
    } else {
        r.atanh() / (base.mu * r)
    }
}

/// Exact time for phi to decay from `1/lambda` to `lambda`; strictly
/// decreasing in lambda, with `inter_sample_time -> max_sampling_period`
/// as `lambda -> 0`.
pub fn inter_sample_time(base: TimingBase, lambda: f64) -> Result<f64, TimingError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(TimingError::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    if base.equal_branch() {
        return Ok((1.0 - lambda) / (base.mu * (1.0 + lambda)));
    }
    let r = base.r();
    let rho = base.ratio();
    let arg = r * (1.0 - lambda) / (2.0 * lambda / (1.0 + lambda) * (rho - 1.0) + 1.0 + lambda);
    if base.gamma > base.mu {
        Ok(arg.atan() / (base.mu * r))
    } else {
        if !(arg > -1.0 && arg < 1.0) {
            return Err(TimingError::NumericDomain(format!(
                "arctanh argument {arg} outside (-1,1) for mu={}, gamma={}, lambda={lambda}",
                base.mu, base.gamma
            )));
        }
        Ok(arg.atanh() / (base.mu * r))
    }
}

/// Number of fixed RK4 steps needed to integrate the clock ODE over `tau`
/// to well below 1e-6 accuracy: resolve the local Lipschitz rate
/// `2*mu + 2*gamma/lambda` with at least 64 steps per interval.
fn phi_substeps(base: TimingBase, lambda: f64, tau: f64) -> usize {
    let rate = 2.0 * base.mu + 2.0 * base.gamma / lambda;
    let by_rate = (60.0 * tau * rate).ceil() as usize;
    by_rate.clamp(64, 2_000_000)
}

/// One fixed RK4 step of the clock ODE.
pub fn phi_step(phi: f64, base: TimingBase, dt: f64) -> f64 {
    let k1 = phi_rate(phi, base);
    let k2 = phi_rate(phi + 0.5 * dt * k1, base);
    let k3 = phi_rate(phi + 0.5 * dt * k2, base);
    let k4 = phi_rate(phi + dt * k3, base);
    phi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Numerically integrate the clock ODE from `phi(0) = 1/lambda` to `phi(tau)`.
/// `tau` must lie in `[0, inter_sample_time(base, lambda)]`.
pub fn integrate_phi(base: TimingBase, lambda: f64, tau: f64) -> Result<f64, TimingError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(TimingError::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    let t_max = inter_sample_time(base, lambda)?;
    if !(0.0..=t_max * (1.0 + 1e-9) + 1e-15).contains(&tau) {
        return Err(TimingError::Domain(format!(
            "tau={tau} outside [0, {t_max}]"
        )));
    }
    let n = phi_substeps(base, lambda, tau);
    let dt = tau / n as f64;
    let mut phi = 1.0 / lambda;
    for _ in 0..n {
        phi = phi_step(phi, base, dt);
    }
    Ok(phi)
}

/// Invert `inter_sample_time(base, .) = h` for lambda by bisection, using
/// strict monotonicity in lambda. Residual tolerance 1e-10 * max(1, h).
pub fn solve_lambda(base: TimingBase, h: f64) -> Result<f64, TimingError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(TimingError::Domain(format!("h must be > 0, got {h}")));
    }
    let t_max = max_sampling_period(base);
    if h >= t_max {
        return Err(TimingError::InfeasiblePeriod { h, t_max });
    }
    let mut lo = 1e-15; // T~(lo) ~ t_max > h
    let mut hi = 1.0 - 1e-16; // T~(hi) ~ 0 < h
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let t = inter_sample_time(base, mid)?;
        if t > h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let residual = (inter_sample_time(base, lambda)? - h).abs();
    if residual > LAMBDA_RESIDUAL_TOL * h.max(1.0) {
        return Err(TimingError::NumericDomain(format!(
            "bisection residual {residual} exceeds tolerance"
        )));
    }
    Ok(lambda)
}

/// Coefficient of the sampling-error term in the triggering function:
/// `1/lambda - (1+s)*lambda`, positive whenever `(1+s)*lambda^2 < 1`.
pub fn trigger_coefficient(lambda: f64, s: f64) -> Result<f64, TimingError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(TimingError::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    if !(s > 0.0) {
        return Err(TimingError::Domain(format!("s must be > 0, got {s}")));
    }
    let prod = (1.0 + s) * lambda * lambda;
    if prod >= 1.0 {
        return Err(TimingError::ConstraintViolation(prod));
    }
    Ok(1.0 / lambda - (1.0 + s) * lambda)
}

/// Full parameter tuple for single-channel (state-feedback) triggering.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimingDesign {
    pub base: TimingBase,
    pub lambda: f64,
    pub h: f64,
    pub s: f64,
    pub alpha: f64,
    pub alpha0: f64,
    pub d: f64,
}

impl TimingDesign {
    pub fn new(
        base: TimingBase,
        lambda: f64,
        h: f64,
        s: f64,
        alpha: f64,
        alpha0: f64,
        d: f64,
    ) -> Result<Self, TimingError> {
        let design = TimingDesign {
            base,
            lambda,
            h,
            s,
            alpha,
            alpha0,
            d,
        };
        design.validate()?;
        Ok(design)
    }

    /// Check the three admissibility conditions:
    /// `log(1+s)/alpha0 < h < T(mu,gamma)`, `h = T~(mu,gamma,lambda)` within
    /// the pairing tolerance, and `(1+s)*lambda^2 < 1` (plus basic sign and
    /// ordering requirements on alpha0 < alpha, d > 0).
    pub fn validate(&self) -> Result<(), TimingError> {
        if !(self.alpha > 0.0 && self.alpha0 > 0.0 && self.alpha0 < self.alpha) {
            return Err(TimingError::Domain(format!(
                "need 0 < alpha0 < alpha, got alpha0={}, alpha={}",
                self.alpha0, self.alpha
            )));
        }
        if !(self.d > 0.0) {
            return Err(TimingError::Domain(format!(
                "d must be > 0, got {}",
                self.d
            )));
        }
        if !(self.s > 0.0) {
            return Err(TimingError::Domain(format!(
                "s must be > 0, got {}",
                self.s
            )));
        }
        let t_max = max_sampling_period(self.base);
        let lower = (1.0 + self.s).ln() / self.alpha0;
        if !(lower < self.h && self.h < t_max) {
            return Err(TimingError::SelectionFailure(format!(
                "h={} violates log(1+s)/alpha0 = {lower} < h < T = {t_max}",
                self.h
            )));
        }
        let t = inter_sample_time(self.base, self.lambda)?;
        if (t - self.h).abs() > PAIRING_TOL * self.h.max(1.0) {
            return Err(TimingError::SelectionFailure(format!(
                "lambda={} pairs with period {t}, not h={}",
                self.lambda, self.h
            )));
        }
        let prod = (1.0 + self.s) * self.lambda * self.lambda;
        if prod >= 1.0 {
            return Err(TimingError::ConstraintViolation(prod));
        }
        Ok(())
    }

    pub fn trigger_coefficient(&self) -> f64 {
        1.0 / self.lambda - (1.0 + self.s) * self.lambda
    }
}

/// Optional overrides for `select_parameters`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TimingHints {
    pub h: Option<f64>,
    pub s: Option<f64>,
    pub alpha0: Option<f64>,
    pub d: Option<f64>,
}

/// Safety factor shrinking the default choices away from their bounds.
const SELECT_SAFETY: f64 = 0.9;

/// Pick an admissible (alpha0, h, lambda, s) tuple. Defaults: alpha0 = 0.9
/// alpha, h = T/2, lambda solved from h, and s at 0.9 times the tighter of
/// its two upper bounds `exp(alpha0*h) - 1` and `1/lambda^2 - 1`. Any hint
/// overrides the default and is then validated rather than adjusted.
pub fn select_parameters(
    base: TimingBase,
    alpha: f64,
    hints: TimingHints,
) -> Result<TimingDesign, TimingError> {
    if !(alpha > 0.0) {
        return Err(TimingError::Domain(format!(
            "alpha must be > 0, got {alpha}"
        )));
    }
    let alpha0 = hints.alpha0.unwrap_or(SELECT_SAFETY * alpha);
    if !(alpha0 > 0.0 && alpha0 < alpha) {
        return Err(TimingError::Domain(format!(
            "alpha0={alpha0} must satisfy 0 < alpha0 < alpha={alpha}"
        )));
    }
    let t_max = max_sampling_period(base);
    let h = hints.h.unwrap_or(0.5 * t_max);
    if !(h > 0.0 && h < t_max) {
        return Err(TimingError::SelectionFailure(format!(
            "h={h} is not in (0, T) with T={t_max}; choose a smaller h"
        )));
    }
    let lambda = solve_lambda(base, h)?;
    let s_bound_jump = (alpha0 * h).exp() - 1.0;
    let s_bound_lambda = 1.0 / (lambda * lambda) - 1.0;
    let s = hints
        .s
        .unwrap_or(SELECT_SAFETY * s_bound_jump.min(s_bound_lambda));
    if !(s > 0.0) || s >= s_bound_jump || s >= s_bound_lambda {
        return Err(TimingError::SelectionFailure(format!(
            "no admissible s: need 0 < s < min({s_bound_jump}, {s_bound_lambda}), got {s}; \
             choose a smaller h"
        )));
    }
    let d = hints.d.unwrap_or(1.0);
    TimingDesign::new(base, lambda, h, s, alpha, alpha0, d)
}

/// Per-channel clock parameters of a dual-channel (output-feedback) design.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelTiming {
    pub base: TimingBase,
    pub lambda: f64,
}

/// Full parameter tuple for dual-channel (output-feedback) triggering:
/// independent clocks for the measurement and input channels sharing one
/// sampling period.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OutputTimingDesign {
    pub channel_y: ChannelTiming,
    pub channel_u: ChannelTiming,
    pub h: f64,
    pub s: f64,
    pub alpha: f64,
    pub alpha0: f64,
    pub d: f64,
    pub c1: f64,
    pub c2: f64,
}

impl OutputTimingDesign {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        channel_y: ChannelTiming,
        channel_u: ChannelTiming,
        h: f64,
        s: f64,
        alpha: f64,
        alpha0: f64,
        d: f64,
        c1: f64,
        c2: f64,
    ) -> Result<Self, TimingError> {
        let design = OutputTimingDesign {
            channel_y,
            channel_u,
            h,
            s,
            alpha,
            alpha0,
            d,
            c1,
            c2,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<(), TimingError> {
        if !(self.alpha > 0.0 && self.alpha0 > 0.0 && self.alpha0 < self.alpha) {
            return Err(TimingError::Domain(format!(
                "need 0 < alpha0 < alpha, got alpha0={}, alpha={}",
                self.alpha0, self.alpha
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(TimingError::Domain("channel weights must be > 0".into()));
        }
        if !(self.d > 0.0) || !(self.s > 0.0) {
            return Err(TimingError::Domain("s and d must be > 0".into()));
        }
        let t1 = max_sampling_period(self.channel_y.base);
        let t2 = max_sampling_period(self.channel_u.base);
        let lower = (1.0 + self.s).ln() / self.alpha0;
        if !(lower < self.h && self.h < t1.min(t2)) {
            return Err(TimingError::SelectionFailure(format!(
                "h={} violates {lower} < h < min(T1,T2) = {}",
                self.h,
                t1.min(t2)
            )));
        }
        for (name, ch) in [("y", &self.channel_y), ("u", &self.channel_u)] {
            let t = inter_sample_time(ch.base, ch.lambda)?;
            if (t - self.h).abs() > PAIRING_TOL * self.h.max(1.0) {
                return Err(TimingError::SelectionFailure(format!(
                    "channel {name}: lambda={} pairs with period {t}, not h={}",
                    ch.lambda, self.h
                )));
            }
            let prod = (1.0 + self.s) * ch.lambda * ch.lambda;
            if prod >= 1.0 {
                return Err(TimingError::ConstraintViolation(prod));
            }
        }
        Ok(())
    }

    pub fn trigger_coefficient_y(&self) -> f64 {
        1.0 / self.channel_y.lambda - (1.0 + self.s) * self.channel_y.lambda
    }

    pub fn trigger_coefficient_u(&self) -> f64 {
        1.0 / self.channel_u.lambda - (1.0 + self.s) * self.channel_u.lambda
    }
}

/// Recover (mu, gamma) from a prescribed decay window: find the unique rates
/// with `max_sampling_period = t_max` and `inter_sample_time(., lambda) = h`.
/// The ratio gamma/mu determines h/t_max alone (both scale as 1/mu), so the
/// ratio is bisected first and mu recovered afterwards.
pub fn base_from_periods(t_max: f64, h: f64, lambda: f64) -> Result<TimingBase, TimingError> {
    if !(t_max > 0.0 && h > 0.0 && h < t_max) {
        return Err(TimingError::Domain(format!(
            "need 0 < h < t_max, got h={h}, t_max={t_max}"
        )));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(TimingError::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    let target = h / t_max;
    let ratio_of = |rho: f64| -> Result<f64, TimingError> {
        let base = TimingBase {
            mu: 1.0,
            gamma: rho,
        };
        Ok(inter_sample_time(base, lambda)? / max_sampling_period(base))
    };
    // The ratio increases from 0 (rho -> 0) to a finite supremum (rho -> inf).
    let mut lo = 1e-8;
    let mut hi = 1e8;
    if ratio_of(lo)? > target || ratio_of(hi)? < target {
        return Err(TimingError::SelectionFailure(format!(
            "no rates realize h/t_max = {target} at lambda = {lambda}"
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if ratio_of(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = (lo * hi).sqrt();
    let mu = max_sampling_period(TimingBase {
        mu: 1.0,
        gamma: rho,
    }) / t_max;
    TimingBase::new(mu, rho * mu)
}
