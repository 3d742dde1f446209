//! Post-hoc trajectory diagnostics: exponential-rate fits, output-envelope
//! verification, the tangential-flow twin integration, and sweep
//! classification.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flows::{Dynamics, FlowError, FlowSpec};
use crate::geometry;
use crate::integrate::{integrate_sampled, IntegrateConfig, IntegrateError, Outcome, Trajectory};
use crate::problem::Problem;
use crate::sampling::linspace;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("trajectory did not converge (outcome {0:?})")]
    NotConverged(Outcome),
    #[error("fit window [{0}, {1}] is not covered by the trajectory")]
    WindowOutOfRange(f64, f64),
    #[error("need at least {needed} samples in the window, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("state error {value:.3e} at t = {t:.3} is at the numeric floor; shrink the window")]
    ErrorFloor { t: f64, value: f64 },
    #[error("initial point is not on the constraint manifold: ‖h(x0)‖ = {0:.3e}")]
    NotOnManifold(f64),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Least-squares exponential fit of the primal error over a time window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted decay rate (negated slope of the log error).
    pub rho_hat: f64,
    /// Fitted prefactor.
    pub c_hat: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

const ERROR_FLOOR: f64 = 1e-12;

/// Fit `‖x(t) − x★‖ ≈ c·e^{−ρt}` by least squares on the log error over
/// `window`. The trajectory must have converged, the window must contain at
/// least ten recorded samples, and every error in the window must sit above
/// the numeric floor (1e−12) for the log to be meaningful.
pub fn fit_rate(
    traj: &Trajectory,
    x_star: &DVector<f64>,
    window: (f64, f64),
) -> Result<RateFit, AnalysisError> {
    if traj.outcome != Outcome::Converged {
        return Err(AnalysisError::NotConverged(traj.outcome));
    }
    let (lo, hi) = window;
    if !(lo < hi) || lo < traj.times[0] || hi > traj.final_time() {
        return Err(AnalysisError::WindowOutOfRange(lo, hi));
    }
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (i, &t) in traj.times.iter().enumerate() {
        if t < lo || t > hi {
            continue;
        }
        let err = (&traj.states[i].x - x_star).norm();
        if err < ERROR_FLOOR {
            return Err(AnalysisError::ErrorFloor { t, value: err });
        }
        ts.push(t);
        logs.push(err.ln());
    }
    if ts.len() < 10 {
        return Err(AnalysisError::TooFewSamples {
            needed: 10,
            found: ts.len(),
        });
    }

    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let l_mean = logs.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stl = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        stt += (t - t_mean) * (t - t_mean);
        stl += (t - t_mean) * (l - l_mean);
    }
    let slope = stl / stt;
    let intercept = l_mean - slope * t_mean;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        let pred = intercept + slope * t;
        ss_res += (l - pred) * (l - pred);
        ss_tot += (l - l_mean) * (l - l_mean);
    }
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RateFit {
        rho_hat: -slope,
        c_hat: intercept.exp(),
        r_squared,
        window,
        samples: ts.len(),
    })
}

/// Least-squares decay rate of the recorded feasibility trace over a time
/// window, ignoring samples at the numeric floor. For the
/// feedback-linearized flow this recovers the output gain `k` exactly up to
/// integration error.
pub fn feasibility_rate(traj: &Trajectory, window: (f64, f64)) -> Result<f64, AnalysisError> {
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (&t, &h) in traj.times.iter().zip(&traj.feasibility) {
        if t >= window.0 && t <= window.1 && h > 1e-11 {
            ts.push(t);
            logs.push(h.ln());
        }
    }
    if ts.len() < 10 {
        return Err(AnalysisError::TooFewSamples {
            needed: 10,
            found: ts.len(),
        });
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stl = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        stt += (t - tm) * (t - tm);
        stl += (t - tm) * (l - lm);
    }
    Ok(-stl / stt)
}

/// Default fitting window: the last half of the trajectory before the
/// primal error reaches the numeric floor. `None` when the trajectory has
/// no usable stretch.
pub fn late_window(traj: &Trajectory, x_star: &DVector<f64>) -> Option<(f64, f64)> {
    let mut t_pre = None;
    for (i, &t) in traj.times.iter().enumerate() {
        if (&traj.states[i].x - x_star).norm() >= ERROR_FLOOR {
            t_pre = Some(t);
        } else {
            break;
        }
    }
    let t_pre = t_pre?;
    let lo = 0.5 * t_pre;
    (lo < t_pre).then_some((lo, t_pre))
}

/// Result of checking a trajectory's constraint output against the decay
/// envelope `e^{−kt}·‖h(x(0))‖`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub passed: bool,
    /// Envelope slack the one-sided check ran with.
    pub tol: f64,
    /// Largest two-sided relative deviation from the envelope over the
    /// samples where the envelope is meaningfully above the noise floor.
    pub max_relative_deviation: f64,
    /// Largest `‖h‖` seen when the start was already on the manifold.
    pub max_feasibility: f64,
}

/// One-sided envelope verification `‖h(x(t))‖ ≤ (1 + tol)·e^{−kt}·‖h(x(0))‖`
/// at every recorded time, with `tol = 1e−3` sized for adaptive integration
/// at `rel_tol = 1e−8` plus an absolute slack of `1e−9·(1 + ‖h(0)‖)` for the
/// integrator's error floor, which dominates once the envelope has decayed
/// eight or more decades. The reported two-sided relative deviation is
/// measured where the envelope sits above `1e−6` absolute; below that no
/// double-precision integration can track the output relatively.
///
/// Only the feedback-linearized flow guarantees this envelope; feeding other
/// flows' trajectories is allowed and expected to fail in general. For a
/// start on the manifold the check degenerates to `‖h‖ ≤ tol` absolutely.
pub fn feasibility_envelope(traj: &Trajectory, k: f64) -> EnvelopeCheck {
    let tol = 1e-3;
    let h0 = traj.feasibility[0];
    let mut max_rel: f64 = 0.0;
    let mut max_feas: f64 = 0.0;
    let mut passed = true;
    if h0 <= 1e-10 {
        for &h in &traj.feasibility {
            max_feas = max_feas.max(h);
        }
        return EnvelopeCheck {
            passed: max_feas <= tol,
            tol,
            max_relative_deviation: 0.0,
            max_feasibility: max_feas,
        };
    }
    for (&t, &h) in traj.times.iter().zip(&traj.feasibility) {
        let envelope = (-k * t).exp() * h0;
        max_feas = max_feas.max(h);
        if h > (1.0 + tol) * envelope + 1e-9 * (1.0 + h0) {
            passed = false;
        }
        if envelope >= (1e-10 * h0).max(1e-6) {
            max_rel = max_rel.max((h - envelope).abs() / envelope);
        }
    }
    EnvelopeCheck {
        passed,
        tol,
        max_relative_deviation: max_rel,
        max_feasibility: max_feas,
    }
}

/// Tangential-flow adapter: `ẋ = −P(x)∇f(x)` as a runtime dynamics, used as
/// the oracle twin for the feedback-linearized flow on the manifold.
struct TangentialFlow;

impl Dynamics for TangentialFlow {
    fn kind(&self) -> &'static str {
        "projected_gradient"
    }
    fn label(&self) -> String {
        "projected_gradient".into()
    }
    fn has_multiplier_state(&self) -> bool {
        false
    }
    fn rhs(
        &self,
        p: &Problem,
        x: &DVector<f64>,
        _z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), FlowError> {
        Ok((geometry::projected_gradient(p, x)?, DVector::zeros(0)))
    }
    fn multiplier(
        &self,
        p: &Problem,
        x: &DVector<f64>,
        _z: &DVector<f64>,
    ) -> Result<DVector<f64>, FlowError> {
        Ok(geometry::multiplier_ls(p, x)?)
    }
    fn pi_gains(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Twin integration of the feedback-linearized flow against the ambient
/// tangential gradient flow `ẋ = −P(x)∇f(x)` from an on-manifold start
/// (`‖h(x0)‖ ≤ 1e−10` required). Both runs use the same configuration and
/// land on the same sample grid; returns the maximal state deviation.
/// Contract: the deviation stays within 10× the integrator tolerance and
/// shrinks proportionally as the tolerance is tightened.
pub fn zero_dynamics_compare(
    p: &Problem,
    x0: &DVector<f64>,
    k: f64,
    cfg: &IntegrateConfig,
) -> Result<f64, AnalysisError> {
    let h0 = p.h(x0).norm();
    if h0 > 1e-10 {
        return Err(AnalysisError::NotOnManifold(h0));
    }
    let samples = linspace(cfg.t_max / 64.0, cfg.t_max, 64);
    let fl = FlowSpec::Fl { k }.dynamics()?;
    let a = integrate_sampled(p, fl.as_ref(), x0, None, cfg, &samples)?;
    let b = integrate_sampled(p, &TangentialFlow, x0, None, cfg, &samples)?;
    let mut dev: f64 = 0.0;
    for (sa, sb) in a.states.iter().zip(&b.states) {
        dev = dev.max((&sa.x - &sb.x).norm());
    }
    Ok(dev)
}

/// One classified trajectory in a sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub flow: String,
    pub initial: Vec<f64>,
    pub outcome: Outcome,
    pub final_time: f64,
    pub final_stationarity: f64,
    pub final_feasibility: f64,
    /// Fitted late-window decay rate; absent when no reference minimizer is
    /// supplied, the trajectory did not converge, or the window is unusable.
    pub rho_hat: Option<f64>,
}

pub struct SweepItem {
    pub flow: String,
    pub initial: DVector<f64>,
    pub traj: Trajectory,
}

/// Deterministic classification table, sorted by (flow label, initial
/// point).
pub fn classify_sweep(items: &[SweepItem], x_star: Option<&DVector<f64>>) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = items
        .iter()
        .map(|item| {
            let rho_hat = x_star.and_then(|xs| {
                let window = late_window(&item.traj, xs)?;
                fit_rate(&item.traj, xs, window).ok().map(|f| f.rho_hat)
            });
            SweepRow {
                flow: item.flow.clone(),
                initial: item.initial.iter().copied().collect(),
                outcome: item.traj.outcome,
                final_time: item.traj.final_time(),
                final_stationarity: *item.traj.stationarity.last().expect("non-empty"),
                final_feasibility: *item.traj.feasibility.last().expect("non-empty"),
                rho_hat,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.flow
            .cmp(&b.flow)
            .then_with(|| a.initial.partial_cmp(&b.initial).expect("finite initials"))
    });
    rows
}

/// Classification table as CSV; the initial point is space-separated inside
/// a single column, `rho_hat` is empty when unavailable.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "flow,initial,outcome,final_time,final_stationarity,final_feasibility,rho_hat\n",
    );
    for row in rows {
        let init = row
            .initial
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let outcome = match row.outcome {
            Outcome::Converged => "converged",
            Outcome::Diverged => "diverged",
            Outcome::HorizonReached => "horizon_reached",
        };
        let rho = row.rho_hat.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.flow,
            init,
            outcome,
            row.final_time,
            row.final_stationarity,
            row.final_feasibility,
            rho
        );
    }
    out
}
