//! Standalone vector-field evaluations shared by the [`super::Dynamics`]
//! implementations and the diagnostics.

use nalgebra::DVector;

use super::FlowError;
use crate::geometry;
use crate::problem::{PointRepr, Problem};

/// PI-family field:
///
/// ```text
/// ẋ = −∇f(x) − ∇h(x)·(k_p·h(x) + k_i·z),    ż = h(x)
/// ```
///
/// `k_p = 0, k_i = 1` is the classical primal-dual (saddle) gradient flow.
pub fn pi_rhs(
    p: &Problem,
    x: &DVector<f64>,
    z: &DVector<f64>,
    k_p: f64,
    k_i: f64,
) -> Result<(DVector<f64>, DVector<f64>), FlowError> {
    let hv = p.h(x);
    let lambda = k_p * &hv + k_i * z;
    let dx = -p.grad_f(x) - p.jac_h(x).transpose() * lambda;
    if dx.iter().any(|v| !v.is_finite()) || hv.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite {
            point: PointRepr::of(x),
        });
    }
    Ok((dx, hv))
}

/// Feedback-linearizing multiplier with the linear output law: `λ(x)` solves
///
/// ```text
/// H(x)·λ = −J(x)∇f(x) − G(h(x)),    G(y) = −k·y
/// ```
///
/// so the closed-loop output satisfies `d/dt h(x(t)) = −k·h(x(t))` exactly.
/// Equivalently, `λ(x)` is the unique minimizer of `‖H(x)σ − b(x)‖²` with
/// `b = −J∇f − G(h)`, which is what makes the PI flow a gradient-flow
/// tracker of this multiplier.
pub fn fl_multiplier(p: &Problem, x: &DVector<f64>, k: f64) -> Result<DVector<f64>, FlowError> {
    let g = geometry::gram(p, x)?;
    let j = p.jac_h(x);
    let rhs = -(&j * p.grad_f(x)) + k * p.h(x);
    Ok(g.solve(&rhs))
}

/// Feedback-linearization field `ẋ = −∇f(x) − ∇h(x)·λ(x)` with
/// [`fl_multiplier`]. Satisfies the output identity `J(x)·ẋ = −k·h(x)`
/// exactly, and reduces to the projected gradient `−P(x)∇f(x)` on the
/// constraint manifold.
pub fn fl_rhs(p: &Problem, x: &DVector<f64>, k: f64) -> Result<DVector<f64>, FlowError> {
    let lambda = fl_multiplier(p, x, k)?;
    let dx = -p.grad_f(x) - p.jac_h(x).transpose() * lambda;
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite {
            point: PointRepr::of(x),
        });
    }
    Ok(dx)
}

/// Multiplier-tracking gradient flow
///
/// ```text
/// σ̇ = −α·(H(x)σ + J(x)∇f(x) − k·h(x))
/// ```
///
/// whose stationary point at fixed `x` is [`fl_multiplier`]. Identifying
/// `σ = λ` and `α = k_p` (with `k = k_i/k_p`) this is the multiplier line of
/// the PI family written in λ-form, which is how the PI flow approximates
/// the feedback-linearization flow at finite gain.
pub fn sigma_gd_rhs(
    p: &Problem,
    x: &DVector<f64>,
    sigma: &DVector<f64>,
    alpha: f64,
    k: f64,
) -> Result<DVector<f64>, FlowError> {
    if !(alpha > 0.0) {
        return Err(FlowError::InvalidGain {
            flow: "sigma_gd".into(),
            detail: format!("alpha must be > 0, got {alpha}"),
        });
    }
    let g = geometry::gram(p, x)?;
    let j = p.jac_h(x);
    let residual = g.matrix() * sigma + &j * p.grad_f(x) - k * p.h(x);
    let out = -alpha * residual;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite {
            point: PointRepr::of(x),
        });
    }
    Ok(out)
}
