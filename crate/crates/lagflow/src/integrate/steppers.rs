//! Stepping strategies behind [`super::integrate`].

use nalgebra::DVector;

use super::{Driver, IntegrateError, Trajectory};

/// Forced landing times: every sample time (when sampling) plus the horizon.
struct Landings<'a> {
    times: Option<&'a [f64]>,
    next: usize,
    t_max: f64,
}

impl<'a> Landings<'a> {
    fn new(times: Option<&'a [f64]>, t_max: f64) -> Self {
        Self {
            times,
            next: 0,
            t_max,
        }
    }

    fn next_target(&self) -> f64 {
        match self.times {
            Some(ts) if self.next < ts.len() => ts[self.next],
            _ => self.t_max,
        }
    }

    fn arrive(&mut self, t: f64) {
        if let Some(ts) = self.times {
            while self.next < ts.len() && ts[self.next] <= t {
                self.next += 1;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Fixed-step classical RK4
// ---------------------------------------------------------------------------

pub(super) fn run_rk4(
    driver: &Driver<'_>,
    traj: &mut Trajectory,
    mut x: DVector<f64>,
    mut z: DVector<f64>,
) -> Result<(), IntegrateError> {
    let mut landings = Landings::new(driver.sample_times, driver.cfg.t_max);
    let mut t = 0.0;
    let mut accepted = 0usize;
    loop {
        if accepted >= driver.cfg.max_steps {
            return Err(IntegrateError::StepBudget {
                t,
                max_steps: driver.cfg.max_steps,
            });
        }
        let target = landings.next_target();
        let dt = driver.cfg.dt.min(target - t);
        let (nx, nz) = rk4_step(driver, traj, &x, &z, dt)?;
        x = nx;
        z = nz;
        accepted += 1;
        traj.stats.steps_accepted += 1;
        // Land exactly rather than accumulating t += dt roundoff.
        t = if t + dt >= target { target } else { t + dt };
        landings.arrive(t);
        if driver.after_step(traj, t, &x, &z, accepted, false)? {
            return Ok(());
        }
    }
}

fn rk4_step(
    driver: &Driver<'_>,
    traj: &mut Trajectory,
    x: &DVector<f64>,
    z: &DVector<f64>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>), IntegrateError> {
    let (k1x, k1z) = driver.rhs(traj, x, z)?;
    let (k2x, k2z) = driver.rhs(traj, &(x + 0.5 * dt * &k1x), &(z + 0.5 * dt * &k1z))?;
    let (k3x, k3z) = driver.rhs(traj, &(x + 0.5 * dt * &k2x), &(z + 0.5 * dt * &k2z))?;
    let (k4x, k4z) = driver.rhs(traj, &(x + dt * &k3x), &(z + dt * &k3z))?;
    let nx = x + dt / 6.0 * (&k1x + 2.0 * &k2x + 2.0 * &k3x + &k4x);
    let nz = z + dt / 6.0 * (&k1z + 2.0 * &k2z + 2.0 * &k3z + &k4z);
    Ok((nx, nz))
}

// ---------------------------------------------------------------------------
// Dormand–Prince 5(4), FSAL, standard step control
// ---------------------------------------------------------------------------

// Stage abscissae are omitted: all flows here are autonomous.
#[rustfmt::skip]
mod dp {
    pub const A: [[f64; 6]; 7] = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// Fifth-order weights (row 7 of A; the propagated solution).
    pub const B: [f64; 7] =
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    /// Error weights b⁽⁵⁾ − b⁽⁴⁾.
    pub const E: [f64; 7] = [
        71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
        -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0,
    ];
}

pub(super) fn run_dopri45(
    driver: &Driver<'_>,
    traj: &mut Trajectory,
    mut x: DVector<f64>,
    mut z: DVector<f64>,
) -> Result<(), IntegrateError> {
    let nx = x.len();
    let nz = z.len();
    let mut landings = Landings::new(driver.sample_times, driver.cfg.t_max);
    let mut t = 0.0;
    let mut accepted = 0usize;
    let mut attempts = 0usize;

    let pack = |x: &DVector<f64>, z: &DVector<f64>| -> DVector<f64> {
        let mut y = DVector::zeros(nx + nz);
        y.rows_mut(0, nx).copy_from(x);
        y.rows_mut(nx, nz).copy_from(z);
        y
    };

    let mut y = pack(&x, &z);
    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(nx + nz); 7];
    let eval = |driver: &Driver<'_>,
                traj: &mut Trajectory,
                y: &DVector<f64>|
     -> Result<Option<DVector<f64>>, IntegrateError> {
        let xv = y.rows(0, nx).clone_owned();
        let zv = y.rows(nx, nz).clone_owned();
        if xv.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        match driver.rhs(traj, &xv, &zv) {
            Ok((dx, dz)) => {
                let mut dy = DVector::zeros(nx + nz);
                dy.rows_mut(0, nx).copy_from(&dx);
                dy.rows_mut(nx, nz).copy_from(&dz);
                Ok(Some(dy))
            }
            // Wild trial states can push evaluations out of range; the
            // controller treats that as a rejected step.
            Err(IntegrateError::Flow(crate::flows::FlowError::NonFinite { .. })) => Ok(None),
            Err(e) => Err(e),
        }
    };

    k[0] = eval(driver, traj, &y)?.ok_or(IntegrateError::NonFiniteState { t })?;
    let mut dt = initial_dt(driver, &y, &k[0]);
    let mut fsal_valid = true;

    loop {
        if attempts >= driver.cfg.max_steps {
            return Err(IntegrateError::StepBudget {
                t,
                max_steps: driver.cfg.max_steps,
            });
        }
        let target = landings.next_target();
        let dt_min = stiffness_floor(t);
        if dt < dt_min {
            return Err(IntegrateError::Stiffness { t, dt });
        }
        let landing = dt >= target - t;
        let h = if landing { target - t } else { dt };

        if !fsal_valid {
            k[0] = eval(driver, traj, &y)?.ok_or(IntegrateError::NonFiniteState { t })?;
            fsal_valid = true;
        }

        attempts += 1;
        let mut failed = false;
        for stage in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = dp::A[stage][j];
                if a != 0.0 {
                    ys += h * a * kj;
                }
            }
            match eval(driver, traj, &ys)? {
                Some(dy) => k[stage] = dy,
                None => {
                    failed = true;
                    break;
                }
            }
        }

        let (err, y_new) = if failed {
            (f64::INFINITY, y.clone())
        } else {
            let mut y_new = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if dp::B[j] != 0.0 {
                    y_new += h * dp::B[j] * kj;
                }
            }
            let mut err_sq = 0.0;
            for i in 0..nx + nz {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    if dp::E[j] != 0.0 {
                        e += dp::E[j] * kj[i];
                    }
                }
                e *= h;
                let sc = driver.cfg.abs_tol + driver.cfg.rel_tol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc) * (e / sc);
            }
            let err = (err_sq / (nx + nz) as f64).sqrt();
            if y_new.iter().any(|v| !v.is_finite()) || !err.is_finite() {
                (f64::INFINITY, y.clone())
            } else {
                (err, y_new)
            }
        };

        // Error-per-unit-step acceptance: the estimate must stay below
        // tolerance·h, which makes the global error scale at least linearly
        // in the tolerances.
        let ratio = err / h;
        if ratio <= 1.0 {
            y = y_new;
            t = if landing { target } else { t + h };
            landings.arrive(t);
            accepted += 1;
            traj.stats.steps_accepted += 1;
            // FSAL: the last stage was evaluated at the accepted state.
            if failed {
                fsal_valid = false;
            } else {
                k[0] = k[6].clone();
            }
            x = y.rows(0, nx).clone_owned();
            z = y.rows(nx, nz).clone_owned();
            if driver.after_step(traj, t, &x, &z, accepted, false)? {
                return Ok(());
            }
            let factor = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.25)).clamp(0.2, 5.0)
            };
            dt = (h * factor)
                .min(driver.cfg.t_max)
                .min(driver.cfg.max_dt.unwrap_or(f64::INFINITY));
        } else {
            traj.stats.steps_rejected += 1;
            let factor = if ratio.is_finite() {
                (0.9 * ratio.powf(-0.25)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            dt = h * factor;
            // The k-stages are stale but k[0] is still f(y); keep it.
        }
    }
}

fn initial_dt(driver: &Driver<'_>, y: &DVector<f64>, f0: &DVector<f64>) -> f64 {
    // Conservative first guess; the controller adapts within a few steps.
    let scale = y.norm().max(1.0);
    let rate = f0.norm().max(1e-8);
    (0.01 * scale / rate)
        .min(driver.cfg.t_max / 100.0)
        .min(driver.cfg.dt.max(1e-6))
        .max(1e-12)
}

fn stiffness_floor(t: f64) -> f64 {
    (1e-13_f64).max(16.0 * f64::EPSILON * t.abs())
}

// ---------------------------------------------------------------------------
// Linearly-implicit scheme for the PI family
// ---------------------------------------------------------------------------

pub(super) fn run_semi_implicit(
    driver: &Driver<'_>,
    traj: &mut Trajectory,
    mut x: DVector<f64>,
    mut z: DVector<f64>,
) -> Result<(), IntegrateError> {
    let (k_p, k_i) = driver.flow.pi_gains().expect("caller verified PI family");
    let p = driver.p;
    let mut landings = Landings::new(driver.sample_times, driver.cfg.t_max);
    let mut t = 0.0;
    let mut accepted = 0usize;
    loop {
        if accepted >= driver.cfg.max_steps {
            return Err(IntegrateError::StepBudget {
                t,
                max_steps: driver.cfg.max_steps,
            });
        }
        let target = landings.next_target();
        let dt = driver.cfg.dt.min(target - t);
        traj.stats.rhs_evals += 1;
        let (nx, nz, dt_used, retries) =
            semi_implicit_step_raw(p, k_p, k_i, &x, &z, dt).map_err(|e| match e {
                IntegrateError::SingularStep { retries, .. } => {
                    IntegrateError::SingularStep { t, retries }
                }
                other => other,
            })?;
        traj.stats.implicit_retries += retries;
        x = nx;
        z = nz;
        accepted += 1;
        traj.stats.steps_accepted += 1;
        // A retried (halved) step advances less than requested.
        t = if dt_used >= dt && t + dt >= target {
            target
        } else {
            t + dt_used
        };
        landings.arrive(t);
        if driver.after_step(traj, t, &x, &z, accepted, false)? {
            return Ok(());
        }
    }
}

/// One linearly-implicit step of the PI field.
///
/// The stiff part of the field is the multiplier feedback through the
/// constraint: freezing `∇f`, `J = jac_h` and the constraint linearization
/// `h(x + δ) ≈ h + Jδ` at the step start and applying backward Euler to the
/// frozen model gives
///
/// ```text
/// (I + c·JᵀJ)·δx = −dt·∇f − Jᵀu,
/// δz = dt·(h + J·δx),
/// c = dt·k_p + dt²·k_i,    u = c·h + dt·k_i·z.
/// ```
///
/// Splitting the right-hand side and using the push-through identity
/// `(I + cJᵀJ)⁻¹Jᵀ = Jᵀ(I_m + cH)⁻¹` (with `H = JJᵀ`) reduces everything to
/// solves with the m×m matrix `I_m + cH`, which stays well conditioned no
/// matter how large `c` gets, and keeps the stiff contribution free of
/// catastrophic cancellation:
///
/// ```text
/// δx = −dt·∇f + c·Jᵀ(I+cH)⁻¹J·dt·∇f − Jᵀ(I+cH)⁻¹u.
/// ```
///
/// First-order accurate, unconditionally stable on the frozen model for any
/// `dt·k_p`.
pub(super) fn semi_implicit_step_raw(
    p: &crate::problem::Problem,
    k_p: f64,
    k_i: f64,
    x: &DVector<f64>,
    z: &DVector<f64>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>, f64, usize), IntegrateError> {
    let g = p.grad_f(x);
    let j = p.jac_h(x);
    let hv = p.h(x);
    let h_mat = &j * j.transpose();
    if g.iter().any(|v| !v.is_finite()) || hv.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteState { t: f64::NAN });
    }

    let m = p.constraint_dim();
    let mut dt_try = dt;
    for retry in 0..8 {
        let c = dt_try * k_p + dt_try * dt_try * k_i;
        let core = nalgebra::DMatrix::identity(m, m) + c * &h_mat;
        if let Some(chol) = core.cholesky() {
            let u = c * &hv + dt_try * k_i * z;
            let smooth = chol.solve(&(&j * (dt_try * &g)));
            let stiff = chol.solve(&u);
            let dx = -dt_try * &g + j.transpose() * (c * smooth - stiff);
            let dz = dt_try * (&hv + &j * &dx);
            let nx = x + dx;
            let nz = z + dz;
            if nx.iter().all(|v| v.is_finite()) && nz.iter().all(|v| v.is_finite()) {
                return Ok((nx, nz, dt_try, retry));
            }
        }
        dt_try *= 0.5;
    }
    Err(IntegrateError::SingularStep {
        t: f64::NAN,
        retries: 8,
    })
}
