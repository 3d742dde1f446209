//! ODE integration of the optimization flows, with convergence and
//! divergence event detection.
//!
//! Convergence is declared on the KKT residual pair rather than on distance
//! to a minimizer (which is unknown in general): a state counts as converged
//! when both `‖h(x)‖` and the multiplier-minimizing stationarity residual
//! `‖∇f(x) + ∇h(x)·φ(x)‖ = ‖P(x)∇f(x)‖` drop below `converge_tol`. The
//! multiplier-minimizing form is used because the raw feedback term
//! `k_p·h(x)` is numerically meaningless once `k_p` is large enough to
//! amplify the floating-point noise floor of `h`.
//!
//! Three stepping strategies are selected by [`Method`]:
//!
//! * `rk4_fixed`: classical fixed-step RK4;
//! * `rk45_adaptive`: Dormand–Prince 5(4) with FSAL and standard step
//!   control; trial steps that leave the floating-point range are rejected
//!   and retried with a smaller step, and a persistent collapse of the step
//!   size is reported as a stiffness failure suggesting `semi_implicit`;
//! * `semi_implicit`: a linearly-implicit first-order scheme for the PI
//!   family that treats the stiff multiplier feedback implicitly on the
//!   frozen linear model, unconditionally stable there; this is what makes
//!   proportional gains of order 10¹⁵ runnable.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flows::{Dynamics, FlowError, FlowSpec};
use crate::geometry;
use crate::problem::Problem;

mod export;
mod steppers;

pub use export::{trajectory_csv, trajectory_sidecar_json, TrajectorySidecar};

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("step size underflow at t = {t:.6e} (dt = {dt:.3e}): the problem is stiff at these gains; use method `semi_implicit`")]
    Stiffness { t: f64, dt: f64 },
    #[error("non-finite state at t = {t:.6e}")]
    NonFiniteState { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t:.6e}")]
    StepBudget { t: f64, max_steps: usize },
    #[error("semi-implicit stepping supports only the PI family, not `{0}`")]
    SemiImplicitUnsupported(String),
    #[error("linearly-implicit step matrix singular even after {retries} halvings at t = {t:.6e}")]
    SingularStep { t: f64, retries: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
    SemiImplicit,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk4_fixed" | "rk4" => Ok(Method::Rk4Fixed),
            "rk45_adaptive" | "rk45" => Ok(Method::Rk45Adaptive),
            "semi_implicit" => Ok(Method::SemiImplicit),
            other => Err(format!(
                "unknown method `{other}` (expected rk4_fixed, rk45_adaptive, semi_implicit)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegrateConfig {
    pub method: Method,
    /// Step size for `rk4_fixed` and `semi_implicit`.
    pub dt: f64,
    /// Error-control tolerances for `rk45_adaptive`.
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Integration horizon.
    pub t_max: f64,
    /// KKT-residual threshold for the converged event.
    pub converge_tol: f64,
    /// Primal-norm bound for the diverged event; `None` defaults to ten times
    /// the evaluation-box diagonal.
    pub diverge_radius: Option<f64>,
    /// Upper bound on the adaptive step size; unbounded when `None`.
    pub max_dt: Option<f64>,
    /// Record every `record_stride`-th accepted step (the final state is
    /// always recorded).
    pub record_stride: usize,
    /// Hard cap on attempted steps.
    pub max_steps: usize,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            dt: 1e-2,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            t_max: 2000.0,
            converge_tol: 1e-6,
            diverge_radius: None,
            max_dt: None,
            record_stride: 1,
            max_steps: 20_000_000,
        }
    }
}

impl IntegrateConfig {
    pub fn validate(&self, p: &Problem) -> Result<f64, IntegrateError> {
        if !(self.dt > 0.0) || !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(IntegrateError::InvalidConfig(
                "dt, abs_tol, rel_tol must be positive".into(),
            ));
        }
        if !(self.t_max > 0.0) {
            return Err(IntegrateError::InvalidConfig(
                "t_max must be positive".into(),
            ));
        }
        if !(self.converge_tol > 0.0) {
            return Err(IntegrateError::InvalidConfig(
                "converge_tol must be positive".into(),
            ));
        }
        if self.record_stride == 0 {
            return Err(IntegrateError::InvalidConfig(
                "record_stride must be at least 1".into(),
            ));
        }
        if let Some(max_dt) = self.max_dt {
            if !(max_dt > 0.0) {
                return Err(IntegrateError::InvalidConfig(
                    "max_dt must be positive".into(),
                ));
            }
        }
        let default_radius = 10.0 * p.region().diagonal();
        let radius = self.diverge_radius.unwrap_or(default_radius);
        if radius <= p.region().diagonal() {
            return Err(IntegrateError::InvalidConfig(format!(
                "diverge_radius {radius} must exceed the box diagonal {}",
                p.region().diagonal()
            )));
        }
        Ok(radius)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub x: DVector<f64>,
    /// Multiplier state; empty for multiplier-free dynamics.
    pub z: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Diverged,
    HorizonReached,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct IntegrationStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
    /// Inner dt halvings performed by the semi-implicit solver.
    pub implicit_retries: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub flow_label: String,
    pub times: Vec<f64>,
    pub states: Vec<FlowState>,
    /// Multiplier-minimizing stationarity residual per recorded state.
    pub stationarity: Vec<f64>,
    /// `‖h(x)‖` per recorded state.
    pub feasibility: Vec<f64>,
    pub outcome: Outcome,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }
}

/// Integrate `flow` from `x0` (and multiplier state `z0` for the PI family;
/// defaults to zero, and must be omitted for multiplier-free dynamics).
///
/// Terminates at the first of: both KKT residuals below `converge_tol`
/// (`Converged`), `‖x‖` beyond the divergence radius (`Diverged`), or the
/// horizon (`HorizonReached`). Identical inputs produce bit-identical
/// trajectories.
pub fn integrate(
    p: &Problem,
    flow: &dyn Dynamics,
    x0: &DVector<f64>,
    z0: Option<&DVector<f64>>,
    cfg: &IntegrateConfig,
) -> Result<Trajectory, IntegrateError> {
    integrate_inner(p, flow, x0, z0, cfg, None)
}

/// One linearly-implicit step of a PI-family flow: the stiff multiplier
/// feedback is treated implicitly on the frozen linear model (an m×m solve
/// with `I + c·H`), everything else explicitly; unconditionally stable on
/// the frozen model for any `dt·k_p`, first-order accurate. Returns the new
/// state and the step actually advanced, which is smaller than `dt` only if
/// a singular inner matrix forced halvings.
pub fn semi_implicit_step(
    p: &Problem,
    spec: &FlowSpec,
    state: &FlowState,
    dt: f64,
) -> Result<(FlowState, f64), IntegrateError> {
    let (k_p, k_i) = spec
        .canonical_pi_gains()
        .ok_or_else(|| IntegrateError::SemiImplicitUnsupported(spec.kind().to_string()))?;
    if !(dt > 0.0) {
        return Err(IntegrateError::InvalidConfig("dt must be positive".into()));
    }
    let (x, z, dt_used, _retries) =
        steppers::semi_implicit_step_raw(p, k_p, k_i, &state.x, &state.z, dt)?;
    Ok((FlowState { x, z }, dt_used))
}

/// Like [`integrate`], but lands exactly on each of `sample_times` and
/// records only there. Termination events other than divergence and
/// non-finite states are disabled so two flows can be compared over the
/// identical time grid.
pub fn integrate_sampled(
    p: &Problem,
    flow: &dyn Dynamics,
    x0: &DVector<f64>,
    z0: Option<&DVector<f64>>,
    cfg: &IntegrateConfig,
    sample_times: &[f64],
) -> Result<Trajectory, IntegrateError> {
    if sample_times.is_empty()
        || sample_times.windows(2).any(|w| w[0] >= w[1])
        || sample_times[0] <= 0.0
        || *sample_times.last().unwrap() > cfg.t_max
    {
        return Err(IntegrateError::InvalidConfig(
            "sample times must be strictly increasing in (0, t_max]".into(),
        ));
    }
    integrate_inner(p, flow, x0, z0, cfg, Some(sample_times))
}

fn integrate_inner(
    p: &Problem,
    flow: &dyn Dynamics,
    x0: &DVector<f64>,
    z0: Option<&DVector<f64>>,
    cfg: &IntegrateConfig,
    sample_times: Option<&[f64]>,
) -> Result<Trajectory, IntegrateError> {
    let radius = cfg.validate(p)?;
    if x0.len() != p.primal_dim() || x0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::InvalidConfig(format!(
            "x0 must be a finite vector of dimension {}",
            p.primal_dim()
        )));
    }
    let z = match (flow.has_multiplier_state(), z0) {
        (true, Some(z)) => {
            if z.len() != p.constraint_dim() {
                return Err(IntegrateError::InvalidConfig(format!(
                    "z0 must have dimension {}",
                    p.constraint_dim()
                )));
            }
            z.clone()
        }
        (true, None) => DVector::zeros(p.constraint_dim()),
        (false, None) => DVector::zeros(0),
        (false, Some(_)) => {
            return Err(IntegrateError::InvalidConfig(format!(
                "flow `{}` has no multiplier state; z0 must be omitted",
                flow.label()
            )));
        }
    };

    if cfg.method == Method::SemiImplicit && flow.pi_gains().is_none() {
        return Err(IntegrateError::SemiImplicitUnsupported(flow.label()));
    }

    let driver = Driver {
        p,
        flow,
        cfg,
        radius,
        sample_times,
    };
    driver.run(x0.clone(), z)
}

struct Driver<'a> {
    p: &'a Problem,
    flow: &'a dyn Dynamics,
    cfg: &'a IntegrateConfig,
    radius: f64,
    sample_times: Option<&'a [f64]>,
}

impl Driver<'_> {
    fn run(&self, x0: DVector<f64>, z0: DVector<f64>) -> Result<Trajectory, IntegrateError> {
        let mut traj = Trajectory {
            flow_label: self.flow.label().to_string(),
            times: Vec::new(),
            states: Vec::new(),
            stationarity: Vec::new(),
            feasibility: Vec::new(),
            outcome: Outcome::HorizonReached,
            stats: IntegrationStats::default(),
        };
        let record_initial = self.sample_times.is_none();
        if record_initial {
            self.record(&mut traj, 0.0, &x0, &z0)?;
        }

        match self.cfg.method {
            Method::Rk4Fixed => steppers::run_rk4(self, &mut traj, x0, z0)?,
            Method::Rk45Adaptive => steppers::run_dopri45(self, &mut traj, x0, z0)?,
            Method::SemiImplicit => steppers::run_semi_implicit(self, &mut traj, x0, z0)?,
        }
        Ok(traj)
    }

    fn record(
        &self,
        traj: &mut Trajectory,
        t: f64,
        x: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<(f64, f64), IntegrateError> {
        let (stat, feas) = self.residuals(x)?;
        traj.times.push(t);
        traj.states.push(FlowState {
            x: x.clone(),
            z: z.clone(),
        });
        traj.stationarity.push(stat);
        traj.feasibility.push(feas);
        Ok((stat, feas))
    }

    /// Multiplier-minimizing KKT residual pair at `x`.
    fn residuals(&self, x: &DVector<f64>) -> Result<(f64, f64), IntegrateError> {
        let phi = geometry::multiplier_ls(self.p, x).map_err(FlowError::from)?;
        let stat = (self.p.grad_f(x) + self.p.jac_h(x).transpose() * phi).norm();
        let feas = self.p.h(x).norm();
        if !stat.is_finite() || !feas.is_finite() {
            return Err(IntegrateError::NonFiniteState { t: f64::NAN });
        }
        Ok((stat, feas))
    }

    /// Shared post-step bookkeeping. Returns `true` when integration should
    /// stop (outcome already set on the trajectory).
    fn after_step(
        &self,
        traj: &mut Trajectory,
        t: f64,
        x: &DVector<f64>,
        z: &DVector<f64>,
        accepted_index: usize,
        force_record: bool,
    ) -> Result<bool, IntegrateError> {
        if x.iter().any(|v| !v.is_finite()) || z.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFiniteState { t });
        }
        let diverged = x.norm() > self.radius;
        let at_horizon = t >= self.cfg.t_max;

        let wants_record = match self.sample_times {
            Some(times) => times.iter().any(|&s| (s - t).abs() <= 1e-12 * s.max(1.0)),
            None => accepted_index % self.cfg.record_stride == 0,
        };

        let mut residuals = None;
        if wants_record || force_record || diverged || at_horizon {
            residuals = Some(self.record(traj, t, x, z)?);
        }

        if diverged {
            traj.outcome = Outcome::Diverged;
            return Ok(true);
        }
        if self.sample_times.is_none() {
            let (stat, feas) = match residuals {
                Some(r) => r,
                None => self.residuals(x)?,
            };
            if stat < self.cfg.converge_tol && feas < self.cfg.converge_tol {
                // Make sure the terminal state is recorded.
                if residuals.is_none() {
                    self.record(traj, t, x, z)?;
                }
                traj.outcome = Outcome::Converged;
                return Ok(true);
            }
        }
        if at_horizon {
            traj.outcome = Outcome::HorizonReached;
            return Ok(true);
        }
        Ok(false)
    }

    fn rhs(
        &self,
        traj: &mut Trajectory,
        x: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), IntegrateError> {
        traj.stats.rhs_evals += 1;
        Ok(self.flow.rhs(self.p, x, z)?)
    }
}
