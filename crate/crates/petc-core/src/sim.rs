//! Impulsive closed-loop simulation under periodic event triggering: flows
//! integrate with fixed-step RK4 between sampling instants, held signals jump
//! only when a triggering function fires, and the storage function is
//! monitored along the way.
//!
//! Determinism contract: identical configuration and seed give bit-identical
//! traces and statistics. Disturbances are piecewise constant per sampling
//! interval, drawn uniformly from `[-w_bound, w_bound]` per channel from a
//! seeded stream.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::symmat::SymMatrix;
use crate::systems::{
    observer_rhs, state_controller_output, GeneralPlant, IqcPlant, ObserverDesign,
    StateFeedbackGains, SystemError,
};
use crate::timing::{
    phi_step, solve_lambda, trigger_coefficient, OutputTimingDesign, TimingDesign, TimingError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation diverged at t = {t}: non-finite state")]
    Diverged { t: f64, partial: Box<SimTrace> },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Timing(#[from] TimingError),
}

type ScalarMap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// State-dependent level set compared against the held-sample error energy:
/// either a user map (general storage part) or a quadratic form.
#[derive(Clone)]
pub enum QuadForm {
    Map(ScalarMap),
    Matrix(SymMatrix),
}

impl std::fmt::Debug for QuadForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuadForm::Map(_) => f.write_str("QuadForm::Map(..)"),
            QuadForm::Matrix(m) => write!(f, "QuadForm::Matrix({}x{})", m.n(), m.n()),
        }
    }
}

impl QuadForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            QuadForm::Map(v) => v(x),
            QuadForm::Matrix(p) => p.quad_form(x),
        }
    }
}

/// Triggering function `coef * |err|^2 - s * V(level_arg)`.
#[derive(Debug, Clone)]
pub struct TriggeringFunction {
    pub coef: f64,
    pub s: f64,
    pub quad: QuadForm,
}

impl TriggeringFunction {
    pub fn new(coef: f64, s: f64, quad: QuadForm) -> Result<Self, SimError> {
        if !(coef > 0.0) {
            return Err(SimError::Config(format!("coef must be > 0, got {coef}")));
        }
        if !(s > 0.0) {
            return Err(SimError::Config(format!("s must be > 0, got {s}")));
        }
        if let QuadForm::Matrix(p) = &quad {
            if !crate::symmat::is_positive_definite(p) {
                return Err(SimError::Config(
                    "triggering-function matrix must be positive definite".into(),
                ));
            }
        }
        Ok(TriggeringFunction { coef, s, quad })
    }

    pub fn gamma(&self, err: &[f64], level_arg: &[f64]) -> f64 {
        self.coef * norm_sq(err) - self.s * self.quad.eval(level_arg)
    }
}

/// Triggering comparison for the state channel.
pub fn gamma_state(x: &[f64], e: &[f64], tf: &TriggeringFunction) -> f64 {
    tf.gamma(e, x)
}

/// Triggering comparison for the measurement channel.
pub fn gamma_output(y: &[f64], y_e: &[f64], tf: &TriggeringFunction) -> f64 {
    tf.gamma(y_e, y)
}

/// Triggering comparison for the input channel.
pub fn gamma_input(x_hat: &[f64], x_e: &[f64], tf: &TriggeringFunction) -> f64 {
    tf.gamma(x_e, x_hat)
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub h: f64,
    pub t_end: f64,
    pub substeps: usize,
    pub seed: u64,
    /// Per-channel disturbance amplitude.
    pub w_bound: Vec<f64>,
    pub x0: Vec<f64>,
    pub xhat0: Option<Vec<f64>>,
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.h > 0.0) {
            return Err(SimError::Config(format!("h must be > 0, got {}", self.h)));
        }
        if !(self.t_end >= self.h) {
            return Err(SimError::Config(format!(
                "t_end = {} must be at least one sampling period h = {}",
                self.t_end, self.h
            )));
        }
        if self.substeps < 1 {
            return Err(SimError::Config("substeps must be >= 1".into()));
        }
        Ok(())
    }

    fn n_intervals(&self) -> usize {
        (self.t_end / self.h + 1e-9).floor() as usize
    }
}

/// Per-sampling-instant record: triggering values and fire decisions, one
/// entry per channel. The record at t = 0 documents the forced initial fire.
#[derive(Debug, Clone, Serialize)]
pub struct EventRecord {
    pub t: f64,
    pub gammas: Vec<f64>,
    pub fired: Vec<bool>,
}

/// Storage-function jump record at one sampling instant: the flow value just
/// before the update and the value just after holds/clocks reset.
#[derive(Debug, Clone, Serialize)]
pub struct JumpRecord {
    pub t: f64,
    pub v_pre: f64,
    pub v_post: f64,
}

/// Dense trajectory of one closed-loop run. The dense grid stores flow
/// values; at sampling instants the pre/post jump pair is in `jumps`.
#[derive(Debug, Clone, Serialize)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Observer estimates; empty for state-feedback runs.
    pub estimates: Vec<Vec<f64>>,
    /// Held signals: the held state sample, or the held output followed by
    /// the held estimate for output-feedback runs.
    pub held: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub v_values: Vec<f64>,
    /// Clock values (one per channel).
    pub phi_values: Vec<Vec<f64>>,
    pub events: Vec<EventRecord>,
    pub jumps: Vec<JumpRecord>,
    pub h: f64,
    pub substeps: usize,
    pub diverged: bool,
}

impl SimTrace {
    fn new(h: f64, substeps: usize) -> Self {
        SimTrace {
            times: Vec::new(),
            states: Vec::new(),
            estimates: Vec::new(),
            held: Vec::new(),
            inputs: Vec::new(),
            disturbances: Vec::new(),
            v_values: Vec::new(),
            phi_values: Vec::new(),
            events: Vec::new(),
            jumps: Vec::new(),
            h,
            substeps,
            diverged: false,
        }
    }

    /// Fire times of one channel (includes the forced fire at t = 0).
    pub fn fire_times(&self, channel: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.fired[channel])
            .map(|e| e.t)
            .collect()
    }

    /// Smallest gap between consecutive fires of a channel.
    pub fn min_inter_fire_gap(&self, channel: usize) -> Option<f64> {
        let times = self.fire_times(channel);
        times
            .windows(2)
            .map(|w| w[1] - w[0])
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    /// Fraction of post-initialization sampling instants whose triggering
    /// value was non-negative.
    pub fn trigger_frequency(&self, channel: usize) -> f64 {
        let mut decisions = 0usize;
        let mut fires = 0usize;
        for e in self.events.iter().filter(|e| e.t > 0.0) {
            decisions += 1;
            if e.gammas[channel] >= 0.0 {
                fires += 1;
            }
        }
        if decisions == 0 {
            0.0
        } else {
            fires as f64 / decisions as f64
        }
    }

    /// Largest state norm over the dense grid restricted to `t >= t_from`.
    pub fn sup_state_norm_after(&self, t_from: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.states)
            .filter(|(t, _)| **t >= t_from)
            .map(|(_, x)| norm(x))
            .fold(0.0, f64::max)
    }

    /// State norm at the final grid point.
    pub fn final_state_norm(&self) -> f64 {
        self.states.last().map(|x| norm(x)).unwrap_or(0.0)
    }

    /// Estimation-error norm (|x - x_hat|) at the final grid point.
    pub fn final_estimation_error_norm(&self) -> Option<f64> {
        let x = self.states.last()?;
        let xh = self.estimates.last()?;
        Some(norm(
            &x.iter().zip(xh).map(|(a, b)| a - b).collect::<Vec<f64>>(),
        ))
    }
}

/// State-feedback closed loop: either a general plant with its feedback map
/// or a structured plant with explicit gains.
#[derive(Debug, Clone)]
pub enum StateLoop<'a> {
    General(&'a GeneralPlant),
    Iqc {
        plant: &'a IqcPlant,
        gains: &'a StateFeedbackGains,
    },
}

impl StateLoop<'_> {
    fn n_x(&self) -> usize {
        match self {
            StateLoop::General(p) => p.n_x,
            StateLoop::Iqc { plant, .. } => plant.n_x(),
        }
    }

    fn n_w(&self) -> usize {
        match self {
            StateLoop::General(p) => p.n_w,
            StateLoop::Iqc { plant, .. } => plant.n_w(),
        }
    }

    fn control(&self, x_held: &[f64]) -> Vec<f64> {
        match self {
            StateLoop::General(p) => p.feedback(x_held),
            StateLoop::Iqc { plant, gains } => state_controller_output(plant, gains, x_held),
        }
    }

    fn rhs(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        match self {
            StateLoop::General(p) => p.rhs(x, u, w),
            StateLoop::Iqc { plant, .. } => plant.rhs(x, u, w),
        }
    }
}

fn rk4_vec(f: impl Fn(&[f64]) -> Vec<f64>, y: &[f64], dt: f64) -> Vec<f64> {
    let k1 = f(y);
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k2 = f(&y2);
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k3 = f(&y3);
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
    let k4 = f(&y4);
    y.iter()
        .enumerate()
        .map(|(i, a)| a + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn draw_disturbance(rng: &mut ChaCha8Rng, bounds: &[f64]) -> Vec<f64> {
    bounds
        .iter()
        .map(|&b| {
            if b > 0.0 {
                rng.random_range(-b..=b)
            } else {
                0.0
            }
        })
        .collect()
}

/// Simulate the state-feedback loop: at every sampling instant the held
/// sample refreshes iff the triggering value is non-negative; the hold fires
/// unconditionally at t = 0. The clock value and storage function ride along
/// on the dense grid.
pub fn run_state_feedback(
    loop_: &StateLoop,
    tf: &TriggeringFunction,
    design: &TimingDesign,
    cfg: &SimConfig,
) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    let n_x = loop_.n_x();
    if cfg.x0.len() != n_x {
        return Err(SimError::Config(format!(
            "x0 has dimension {}, plant expects {n_x}",
            cfg.x0.len()
        )));
    }
    if cfg.w_bound.len() != loop_.n_w() {
        return Err(SimError::Config(format!(
            "w_bound has {} channels, plant expects {}",
            cfg.w_bound.len(),
            loop_.n_w()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = SimTrace::new(cfg.h, cfg.substeps);
    let n_intervals = cfg.n_intervals();
    let dt = cfg.h / cfg.substeps as f64;
    let lambda_inv = 1.0 / design.lambda;

    let mut x = cfg.x0.clone();
    let mut x_held = cfg.x0.clone(); // forced fire at t = 0
    let mut phi = lambda_inv;

    trace.events.push(EventRecord {
        t: 0.0,
        gammas: vec![tf.gamma(&vec![0.0; n_x], &x)],
        fired: vec![true],
    });

    let push_knot = |trace: &mut SimTrace,
                     t: f64,
                     x: &[f64],
                     x_held: &[f64],
                     u: &[f64],
                     w: &[f64],
                     phi: f64| {
        let e: Vec<f64> = x.iter().zip(x_held).map(|(a, b)| a - b).collect();
        trace.times.push(t);
        trace.states.push(x.to_vec());
        trace.held.push(x_held.to_vec());
        trace.inputs.push(u.to_vec());
        trace.disturbances.push(w.to_vec());
        trace.v_values.push(tf.quad.eval(x) + phi * norm_sq(&e));
        trace.phi_values.push(vec![phi]);
    };

    let mut w = draw_disturbance(&mut rng, &cfg.w_bound);
    push_knot(
        &mut trace,
        0.0,
        &x,
        &x_held,
        &loop_.control(&x_held),
        &w,
        phi,
    );

    for k in 0..n_intervals {
        if k > 0 {
            w = draw_disturbance(&mut rng, &cfg.w_bound);
        }
        let u = loop_.control(&x_held);
        for i in 1..=cfg.substeps {
            x = rk4_vec(|y| loop_.rhs(y, &u, &w), &x, dt);
            phi = phi_step(phi, design.base, dt);
            let t = (k * cfg.substeps + i) as f64 * dt;
            if !x.iter().all(|v| v.is_finite()) {
                trace.diverged = true;
                return Err(SimError::Diverged {
                    t,
                    partial: Box::new(trace),
                });
            }
            push_knot(&mut trace, t, &x, &x_held, &u, &w, phi);
        }
        // sampling instant t_{k+1}
        let t_k = (k + 1) as f64 * cfg.h;
        let e: Vec<f64> = x.iter().zip(&x_held).map(|(a, b)| a - b).collect();
        let gamma = tf.gamma(&e, &x);
        let v_pre = tf.quad.eval(&x) + phi * norm_sq(&e);
        let fired = gamma >= 0.0;
        if fired {
            x_held = x.clone();
        }
        let e_post: Vec<f64> = x.iter().zip(&x_held).map(|(a, b)| a - b).collect();
        phi = lambda_inv;
        let v_post = tf.quad.eval(&x) + phi * norm_sq(&e_post);
        trace.events.push(EventRecord {
            t: t_k,
            gammas: vec![gamma],
            fired: vec![fired],
        });
        trace.jumps.push(JumpRecord {
            t: t_k,
            v_pre,
            v_post,
        });
    }
    Ok(trace)
}

/// Simulate the observer-based output-feedback loop with independent
/// triggering of the measurement and input channels. The storage trace adds
/// `xi' P xi` (xi = (x; x - x_hat)) when `xi_quad` is supplied; otherwise it
/// carries only the clock-weighted error part.
pub fn run_output_feedback(
    plant: &IqcPlant,
    design: &ObserverDesign,
    tf_y: &TriggeringFunction,
    tf_u: &TriggeringFunction,
    timing: &OutputTimingDesign,
    cfg: &SimConfig,
    xi_quad: Option<&SymMatrix>,
) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    let c = plant.c.clone().ok_or(SystemError::MissingOutput)?;
    let n_x = plant.n_x();
    if cfg.x0.len() != n_x {
        return Err(SimError::Config(format!(
            "x0 has dimension {}, plant expects {n_x}",
            cfg.x0.len()
        )));
    }
    let xhat0 = cfg
        .xhat0
        .as_ref()
        .ok_or_else(|| SimError::Config("output-feedback runs need xhat0".into()))?;
    if xhat0.len() != n_x {
        return Err(SimError::Config("xhat0 dimension mismatch".into()));
    }
    if cfg.w_bound.len() != plant.n_w() {
        return Err(SimError::Config("w_bound channel count mismatch".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = SimTrace::new(cfg.h, cfg.substeps);
    let n_intervals = cfg.n_intervals();
    let dt = cfg.h / cfg.substeps as f64;
    let lam1_inv = 1.0 / timing.channel_y.lambda;
    let lam2_inv = 1.0 / timing.channel_u.lambda;

    let mut x = cfg.x0.clone();
    let mut xh = xhat0.clone();
    let mut y_c = c.mul_vec(&x); // both channels fire at t = 0
    let mut xh_c = xh.clone();
    let mut phi1 = lam1_inv;
    let mut phi2 = lam2_inv;
    let n_y = c.rows();

    trace.events.push(EventRecord {
        t: 0.0,
        gammas: vec![
            tf_y.gamma(&vec![0.0; n_y], &y_c),
            tf_u.gamma(&vec![0.0; n_x], &xh),
        ],
        fired: vec![true, true],
    });

    let v_of = |x: &[f64], xh: &[f64], y_c: &[f64], xh_c: &[f64], phi1: f64, phi2: f64| {
        let y = c.mul_vec(x);
        let y_e: Vec<f64> = y_c.iter().zip(&y).map(|(a, b)| a - b).collect();
        let x_e: Vec<f64> = xh_c.iter().zip(xh).map(|(a, b)| a - b).collect();
        let mut v = timing.c1 * phi1 * norm_sq(&y_e) + timing.c2 * phi2 * norm_sq(&x_e);
        if let Some(p) = xi_quad {
            let mut xi = x.to_vec();
            xi.extend(x.iter().zip(xh).map(|(a, b)| a - b));
            v += p.quad_form(&xi);
        }
        v
    };

    let push_knot = |trace: &mut SimTrace,
                     t: f64,
                     x: &[f64],
                     xh: &[f64],
                     y_c: &[f64],
                     xh_c: &[f64],
                     u: &[f64],
                     w: &[f64],
                     phi1: f64,
                     phi2: f64| {
        trace.times.push(t);
        trace.states.push(x.to_vec());
        trace.estimates.push(xh.to_vec());
        let mut held = y_c.to_vec();
        held.extend_from_slice(xh_c);
        trace.held.push(held);
        trace.inputs.push(u.to_vec());
        trace.disturbances.push(w.to_vec());
        trace.v_values.push(v_of(x, xh, y_c, xh_c, phi1, phi2));
        trace.phi_values.push(vec![phi1, phi2]);
    };

    let mut w = draw_disturbance(&mut rng, &cfg.w_bound);
    let u0 = state_controller_output(plant, &design.gains, &xh_c);
    push_knot(&mut trace, 0.0, &x, &xh, &y_c, &xh_c, &u0, &w, phi1, phi2);

    for k in 0..n_intervals {
        if k > 0 {
            w = draw_disturbance(&mut rng, &cfg.w_bound);
        }
        let u = state_controller_output(plant, &design.gains, &xh_c);
        for i in 1..=cfg.substeps {
            // joint flow of plant state and observer estimate
            let z: Vec<f64> = x.iter().chain(xh.iter()).copied().collect();
            let z_next = rk4_vec(
                |z| {
                    let (zx, zxh) = z.split_at(n_x);
                    let mut dz = plant.rhs(zx, &u, &w);
                    dz.extend(
                        observer_rhs(plant, design, zxh, &u, &y_c)
                            .expect("output matrix validated above"),
                    );
                    dz
                },
                &z,
                dt,
            );
            x = z_next[..n_x].to_vec();
            xh = z_next[n_x..].to_vec();
            phi1 = phi_step(phi1, timing.channel_y.base, dt);
            phi2 = phi_step(phi2, timing.channel_u.base, dt);
            let t = (k * cfg.substeps + i) as f64 * dt;
            if !x.iter().chain(xh.iter()).all(|v| v.is_finite()) {
                trace.diverged = true;
                return Err(SimError::Diverged {
                    t,
                    partial: Box::new(trace),
                });
            }
            push_knot(&mut trace, t, &x, &xh, &y_c, &xh_c, &u, &w, phi1, phi2);
        }
        // sampling instant t_{k+1}: both channels evaluated independently
        let t_k = (k + 1) as f64 * cfg.h;
        let y = c.mul_vec(&x);
        let y_e: Vec<f64> = y_c.iter().zip(&y).map(|(a, b)| a - b).collect();
        let x_e: Vec<f64> = xh_c.iter().zip(&xh).map(|(a, b)| a - b).collect();
        let gamma_y = tf_y.gamma(&y_e, &y);
        let gamma_u = tf_u.gamma(&x_e, &xh);
        let v_pre = v_of(&x, &xh, &y_c, &xh_c, phi1, phi2);
        let fired_y = gamma_y >= 0.0;
        let fired_u = gamma_u >= 0.0;
        if fired_y {
            y_c = y.clone();
        }
        if fired_u {
            xh_c = xh.clone();
        }
        phi1 = lam1_inv;
        phi2 = lam2_inv;
        let v_post = v_of(&x, &xh, &y_c, &xh_c, phi1, phi2);
        trace.events.push(EventRecord {
            t: t_k,
            gammas: vec![gamma_y, gamma_u],
            fired: vec![fired_y, fired_u],
        });
        trace.jumps.push(JumpRecord {
            t: t_k,
            v_pre,
            v_post,
        });
    }
    Ok(trace)
}

/// Relative tolerance on the jump inequality `V+ <= (1+s) V`.
pub const JUMP_TOL_REL: f64 = 1e-9;
/// Fraction of the working decay rate tolerated by the flow check, absorbing
/// finite-difference discretization error.
pub const FLOW_TOL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub jump_violations: usize,
    pub worst_jump_excess: f64,
    pub checked_jumps: usize,
    pub flow_violations: usize,
    /// Worst log-V slope excess above the tolerated bound, in 1/time units.
    pub worst_flow_excess: f64,
    pub checked_flow_points: usize,
}

impl LyapunovReport {
    pub fn clean(&self) -> bool {
        self.jump_violations == 0 && self.flow_violations == 0
    }
}

/// Check the certified storage inequalities along a trace: at every sampling
/// instant `V+ <= (1+s) V (1 + 1e-9)`, and along flows the log-V slope stays
/// at or below `-alpha0 (1 - 0.05)` wherever `V >= d/(alpha - alpha0) |w|^2`.
/// Slopes use centered differences on the dense grid, away from instants.
pub fn monitor_lyapunov(
    trace: &SimTrace,
    s: f64,
    alpha: f64,
    alpha0: f64,
    d: f64,
) -> LyapunovReport {
    let mut report = LyapunovReport {
        jump_violations: 0,
        worst_jump_excess: 0.0,
        checked_jumps: trace.jumps.len(),
        flow_violations: 0,
        worst_flow_excess: f64::NEG_INFINITY,
        checked_flow_points: 0,
    };
    for jump in &trace.jumps {
        let bound = (1.0 + s) * jump.v_pre * (1.0 + JUMP_TOL_REL);
        if jump.v_post > bound {
            report.jump_violations += 1;
            report.worst_jump_excess = report.worst_jump_excess.max(jump.v_post - bound);
        }
    }

    let sub = trace.substeps;
    let dt = trace.h / sub as f64;
    let gate = d / (alpha - alpha0);
    let slope_bound = -alpha0 * (1.0 - FLOW_TOL_FRACTION);
    for k in 0..trace.jumps.len() {
        // flow segment k occupies grid indices (k*sub, (k+1)*sub]; index 0 is
        // the post-jump start of segment 0, so that segment includes it
        let start = if k == 0 { 0 } else { k * sub + 1 };
        let end = (k + 1) * sub;
        if end >= trace.times.len() {
            break;
        }
        for g in start + 1..end {
            let v = trace.v_values[g];
            let w_norm_sq = norm_sq(&trace.disturbances[g]);
            if v >= gate * w_norm_sq && v > 1e-300 {
                let v_prev = trace.v_values[g - 1];
                let v_next = trace.v_values[g + 1];
                if v_prev > 1e-300 && v_next > 1e-300 {
                    let slope = (v_next.ln() - v_prev.ln()) / (2.0 * dt);
                    report.checked_flow_points += 1;
                    let excess = slope - slope_bound;
                    if excess > 0.0 {
                        report.flow_violations += 1;
                    }
                    if excess > report.worst_flow_excess {
                        report.worst_flow_excess = excess;
                    }
                }
            }
        }
    }
    if report.checked_flow_points == 0 {
        report.worst_flow_excess = 0.0;
    }
    report
}

/// One Monte-Carlo row for the single-channel (state-feedback) scenario.
#[derive(Debug, Clone, Serialize)]
pub struct StateStatsRow {
    pub h: f64,
    pub lambda: f64,
    pub coef: f64,
    pub f_avg: f64,
    pub n_runs: usize,
    pub seed: u64,
}

/// One Monte-Carlo row for the dual-channel (output-feedback) scenario.
#[derive(Debug, Clone, Serialize)]
pub struct OutputStatsRow {
    pub h: f64,
    pub lambda_y: f64,
    pub lambda_u: f64,
    pub coef_y: f64,
    pub coef_u: f64,
    pub f_avg_y: f64,
    pub f_avg_u: f64,
    pub n_runs: usize,
    pub seed: u64,
}

/// Batch scenario shared by the Monte-Carlo drivers: initial conditions
/// drawn uniformly from a box, disturbance amplitudes, horizon.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub x0_lo: Vec<f64>,
    pub x0_hi: Vec<f64>,
    pub w_bound: Vec<f64>,
    pub t_end: f64,
    pub substeps: usize,
}

fn draw_box(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| if a < b { rng.random_range(a..=b) } else { a })
        .collect()
}

/// Separates the initial-condition stream from the disturbance stream of a
/// run while both derive from the same per-run seed.
const DISTURBANCE_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Average triggering frequency per sampling period: for every `h` the
/// contraction factor is re-solved from the same clock rates, the triggering
/// coefficient recomputed, and `n_runs` seeded simulations averaged. Run `r`
/// derives its seeds from `seed + r`, so results do not depend on execution
/// order. A period at or beyond the closed-form maximum fails the batch with
/// an infeasible-period error identifying that row.
pub fn monte_carlo_state(
    loop_: &StateLoop,
    quad: &QuadForm,
    design: &TimingDesign,
    scenario: &Scenario,
    h_list: &[f64],
    n_runs: usize,
    seed: u64,
) -> Result<Vec<StateStatsRow>, SimError> {
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let lambda = solve_lambda(design.base, h)?;
        let coef = trigger_coefficient(lambda, design.s)?;
        let tf = TriggeringFunction::new(coef, design.s, quad.clone())?;
        let row_design = TimingDesign {
            lambda,
            h,
            ..*design
        };
        let mut total = 0.0;
        for r in 0..n_runs {
            let run_seed = seed.wrapping_add(r as u64);
            let mut init_rng = ChaCha8Rng::seed_from_u64(run_seed);
            let x0 = draw_box(&mut init_rng, &scenario.x0_lo, &scenario.x0_hi);
            let cfg = SimConfig {
                h,
                t_end: scenario.t_end,
                substeps: scenario.substeps,
                seed: run_seed ^ DISTURBANCE_SEED_SALT,
                w_bound: scenario.w_bound.clone(),
                x0,
                xhat0: None,
            };
            let trace = run_state_feedback(loop_, &tf, &row_design, &cfg)?;
            total += trace.trigger_frequency(0);
        }
        rows.push(StateStatsRow {
            h,
            lambda,
            coef,
            f_avg: total / n_runs as f64,
            n_runs,
            seed,
        });
    }
    Ok(rows)
}

/// Dual-channel counterpart of [`monte_carlo_state`]: both channel factors
/// are re-solved per period and both frequencies averaged. The estimate's
/// initial condition is an independent draw from the same box.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_output(
    plant: &IqcPlant,
    design: &ObserverDesign,
    quad_y: &QuadForm,
    quad_u: &QuadForm,
    timing: &OutputTimingDesign,
    scenario: &Scenario,
    h_list: &[f64],
    n_runs: usize,
    seed: u64,
) -> Result<Vec<OutputStatsRow>, SimError> {
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let lambda_y = solve_lambda(timing.channel_y.base, h)?;
        let lambda_u = solve_lambda(timing.channel_u.base, h)?;
        let coef_y = trigger_coefficient(lambda_y, timing.s)?;
        let coef_u = trigger_coefficient(lambda_u, timing.s)?;
        let tf_y = TriggeringFunction::new(coef_y, timing.s, quad_y.clone())?;
        let tf_u = TriggeringFunction::new(coef_u, timing.s, quad_u.clone())?;
        let mut row_timing = *timing;
        row_timing.h = h;
        row_timing.channel_y.lambda = lambda_y;
        row_timing.channel_u.lambda = lambda_u;
        let (mut total_y, mut total_u) = (0.0, 0.0);
        for r in 0..n_runs {
            let run_seed = seed.wrapping_add(r as u64);
            let mut init_rng = ChaCha8Rng::seed_from_u64(run_seed);
            let x0 = draw_box(&mut init_rng, &scenario.x0_lo, &scenario.x0_hi);
            let xhat0 = draw_box(&mut init_rng, &scenario.x0_lo, &scenario.x0_hi);
            let cfg = SimConfig {
                h,
                t_end: scenario.t_end,
                substeps: scenario.substeps,
                seed: run_seed ^ DISTURBANCE_SEED_SALT,
                w_bound: scenario.w_bound.clone(),
                x0,
                xhat0: Some(xhat0),
            };
            let trace = run_output_feedback(plant, design, &tf_y, &tf_u, &row_timing, &cfg, None)?;
            total_y += trace.trigger_frequency(0);
            total_u += trace.trigger_frequency(1);
        }
        rows.push(OutputStatsRow {
            h,
            lambda_y,
            lambda_u,
            coef_y,
            coef_u,
            f_avg_y: total_y / n_runs as f64,
            f_avg_u: total_u / n_runs as f64,
            n_runs,
            seed,
        });
    }
    Ok(rows)
}
