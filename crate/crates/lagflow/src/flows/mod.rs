//! The dynamics family: interchangeable vector fields whose equilibria are
//! KKT points of the constrained problem.
//!
//! All variants are driven by the Lagrangian plant `ẋ = −∇f(x) − ∇h(x)·λ`
//! and differ only in how the multiplier `λ` is produced:
//!
//! * the PI family carries explicit multiplier state `z` and feeds back
//!   `λ = k_p·h(x) + k_i·z`, `ż = h(x)`; `pdgd` is the pure-integral member
//!   (`k_p = 0, k_i = 1`) and `alm`, the augmented-Lagrangian flow with
//!   penalty `w`, is stored canonically as `k_p = w, k_i = 1`;
//! * the `fl` variant eliminates the multiplier algebraically: `λ(x)` solves
//!   the m×m system that forces the constraint output `y = h(x)` to obey a
//!   prescribed globally exponentially stable law `ẏ = G(y)`. The shipped
//!   control is the linear family `G(y) = −k·y` (output decay rate exactly
//!   `k`); [`OutputControl::Custom`] accepts a general `G` but carries no
//!   rate certificate.
//!
//! Each variant implements [`Dynamics`] and is constructed by name through
//! [`build`], so callers select the flow at runtime from configuration.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError};
use crate::problem::{PointRepr, Problem};

mod ops;

pub use ops::{fl_multiplier, fl_rhs, pi_rhs, sigma_gd_rhs};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("non-finite flow evaluation at x = {point}")]
    NonFinite { point: PointRepr },
    #[error("state dimension mismatch: expected x:{expected_x}, z:{expected_z}, got x:{got_x}, z:{got_z}")]
    Dimensions {
        expected_x: usize,
        expected_z: usize,
        got_x: usize,
        got_z: usize,
    },
    #[error("flow `{flow}` requires gain `{gain}`")]
    MissingGain { flow: String, gain: &'static str },
    #[error("invalid gain for flow `{flow}`: {detail}")]
    InvalidGain { flow: String, detail: String },
    #[error("unknown flow kind `{0}` (expected one of pdgd, pi, alm, fl)")]
    UnknownKind(String),
}

/// A member of the dynamics family, usable as a trait object by the
/// integrator and the CLI.
pub trait Dynamics: Send + Sync {
    /// Registry key of the variant this instance was built as.
    fn kind(&self) -> &'static str;

    /// Human-readable label including gains, e.g. `pi(kp=100, ki=1)`.
    fn label(&self) -> String;

    /// Whether the flow carries explicit multiplier state `z` (dimension m).
    fn has_multiplier_state(&self) -> bool;

    /// Vector field `(ẋ, ż)` at `(x, z)`. For multiplier-free dynamics `z`
    /// must be empty and the returned `ż` is empty.
    fn rhs(
        &self,
        p: &Problem,
        x: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), FlowError>;

    /// The effective multiplier entering `ẋ = −∇f − ∇h·λ` at this state.
    fn multiplier(
        &self,
        p: &Problem,
        x: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<DVector<f64>, FlowError>;

    /// Proportional/integral gains when this is a PI-family flow; used by the
    /// linearly-implicit stepper, which needs the stiff term's structure.
    fn pi_gains(&self) -> Option<(f64, f64)>;
}

/// PI-family dynamics (also realizes `pdgd` and `alm` canonically).
pub struct PiDynamics {
    pub k_p: f64,
    pub k_i: f64,
    kind: &'static str,
}

impl PiDynamics {
    fn check_dims(&self, p: &Problem, x: &DVector<f64>, z: &DVector<f64>) -> Result<(), FlowError> {
        if x.len() != p.primal_dim() || z.len() != p.constraint_dim() {
            return Err(FlowError::Dimensions {
                expected_x: p.primal_dim(),
                expected_z: p.constraint_dim(),
                got_x: x.len(),
                got_z: z.len(),
            });
        }
        Ok(())
    }
}

impl Dynamics for PiDynamics {
    fn kind(&self) -> &'static str {
        self.kind
    }

    fn label(&self) -> String {
        match self.kind {
            "pdgd" => "pdgd".to_string(),
            "alm" => format!("alm(w={})", self.k_p),
            _ => format!("pi(kp={}, ki={})", self.k_p, self.k_i),
        }
    }

    fn has_multiplier_state(&self) -> bool {
        true
    }

    fn rhs(
        &self,
        p: &Problem,
        x: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), FlowError> {
        self.check_dims(p, x, z)?;
        ops::pi_rhs(p, x, z, self.k_p, self.k_i)
    }

    fn multiplier(
        &self,
        p: &Problem,
        x: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<DVector<f64>, FlowError> {
        self.check_dims(p, x, z)?;
        Ok(self.k_p * p.h(x) + self.k_i * z)
    }

    fn pi_gains(&self) -> Option<(f64, f64)> {
        Some((self.k_p, self.k_i))
    }
}

/// Stable output law for the feedback-linearized constraint output.
#[derive(Clone)]
pub enum OutputControl {
    /// `G(y) = −k·y`: output decays as `e^{−kt}` exactly; certified rate `k`,
    /// overshoot constant 1.
    Linear { k: f64 },
    /// Arbitrary `G`. The caller is responsible for `ẏ = G(y)` being globally
    /// exponentially stable; no rate certificate is attached.
    Custom(Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>),
}

impl OutputControl {
    pub fn eval(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            OutputControl::Linear { k } => -*k * y,
            OutputControl::Custom(g) => g(y),
        }
    }

    /// Certified exponential rate of `ẏ = G(y)`, when known.
    pub fn certified_rate(&self) -> Option<f64> {
        match self {
            OutputControl::Linear { k } => Some(*k),
            OutputControl::Custom(_) => None,
        }
    }
}

impl fmt::Debug for OutputControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputControl::Linear { k } => write!(f, "Linear {{ k: {k} }}"),
            OutputControl::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Feedback-linearization dynamics: primal state only.
pub struct FlDynamics {
    pub control: OutputControl,
}

impl Dynamics for FlDynamics {
    fn kind(&self) -> &'static str {
        "fl"
    }

    fn label(&self) -> String {
        match &self.control {
            OutputControl::Linear { k } => format!("fl(k={k})"),
            OutputControl::Custom(_) => "fl(custom)".to_string(),
        }
    }

    fn has_multiplier_state(&self) -> bool {
        false
    }

    fn rhs(
        &self,
        p: &Problem,
        x: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), FlowError> {
        if x.len() != p.primal_dim() || !z.is_empty() {
            return Err(FlowError::Dimensions {
                expected_x: p.primal_dim(),
                expected_z: 0,
                got_x: x.len(),
                got_z: z.len(),
            });
        }
        let lambda = self.multiplier(p, x, z)?;
        let dx = -p.grad_f(x) - p.jac_h(x).transpose() * lambda;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite {
                point: PointRepr::of(x),
            });
        }
        Ok((dx, DVector::zeros(0)))
    }

    fn multiplier(
        &self,
        p: &Problem,
        x: &DVector<f64>,
        _z: &DVector<f64>,
    ) -> Result<DVector<f64>, FlowError> {
        let g = geometry::gram(p, x)?;
        let j = p.jac_h(x);
        // H λ = −J∇f − G(y): substituting into ẏ = −J∇f − Hλ yields the
        // closed loop ẏ = G(y).
        let rhs = -(&j * p.grad_f(x)) - self.control.eval(&p.h(x));
        Ok(g.solve(&rhs))
    }

    fn pi_gains(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Which dynamics to run, with its gains. `pdgd` and `alm` are stored
/// canonically as PI gains (`k_p = 0, k_i = 1` and `k_p = w, k_i = 1`);
/// construction goes through the same [`PiDynamics`] implementation, so
/// their vector fields agree with the equivalent `pi` instance bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FlowSpec {
    Pdgd,
    Pi { k_p: f64, k_i: f64 },
    Alm { w: f64 },
    Fl { k: f64 },
}

impl FlowSpec {
    /// Canonical `(k_p, k_i)` for PI-family members, `None` for `fl`.
    pub fn canonical_pi_gains(&self) -> Option<(f64, f64)> {
        match *self {
            FlowSpec::Pdgd => Some((0.0, 1.0)),
            FlowSpec::Pi { k_p, k_i } => Some((k_p, k_i)),
            FlowSpec::Alm { w } => Some((w, 1.0)),
            FlowSpec::Fl { .. } => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FlowSpec::Pdgd => "pdgd",
            FlowSpec::Pi { .. } => "pi",
            FlowSpec::Alm { .. } => "alm",
            FlowSpec::Fl { .. } => "fl",
        }
    }

    /// Instantiate the runtime dynamics, validating gains.
    pub fn dynamics(&self) -> Result<Box<dyn Dynamics>, FlowError> {
        match *self {
            FlowSpec::Pdgd => Ok(Box::new(PiDynamics {
                k_p: 0.0,
                k_i: 1.0,
                kind: "pdgd",
            })),
            FlowSpec::Pi { k_p, k_i } => {
                if !(k_p >= 0.0) || !k_p.is_finite() {
                    return Err(FlowError::InvalidGain {
                        flow: "pi".into(),
                        detail: format!("k_p must be finite and ≥ 0, got {k_p}"),
                    });
                }
                if !(k_i > 0.0) {
                    return Err(FlowError::InvalidGain {
                        flow: "pi".into(),
                        detail: format!("k_i must be > 0, got {k_i}"),
                    });
                }
                Ok(Box::new(PiDynamics {
                    k_p,
                    k_i,
                    kind: "pi",
                }))
            }
            FlowSpec::Alm { w } => {
                if !(w > 0.0) {
                    return Err(FlowError::InvalidGain {
                        flow: "alm".into(),
                        detail: format!("penalty w must be > 0, got {w}"),
                    });
                }
                Ok(Box::new(PiDynamics {
                    k_p: w,
                    k_i: 1.0,
                    kind: "alm",
                }))
            }
            FlowSpec::Fl { k } => {
                if !(k > 0.0) {
                    return Err(FlowError::InvalidGain {
                        flow: "fl".into(),
                        detail: format!("output gain k must be > 0, got {k}"),
                    });
                }
                Ok(Box::new(FlDynamics {
                    control: OutputControl::Linear { k },
                }))
            }
        }
    }
}

/// Registered flow kinds, in the order the CLI lists them.
pub fn kinds() -> &'static [&'static str] {
    &["pdgd", "pi", "alm", "fl"]
}

/// Loose gain bag as collected from flags or config files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GainSet {
    pub k_p: Option<f64>,
    pub k_i: Option<f64>,
    pub w: Option<f64>,
    pub k: Option<f64>,
}

/// Build a [`FlowSpec`] by registry name, reporting exactly which gain is
/// missing when the selection is incomplete.
pub fn build(kind: &str, gains: &GainSet) -> Result<FlowSpec, FlowError> {
    match kind {
        "pdgd" => Ok(FlowSpec::Pdgd),
        "pi" => {
            let k_p = gains.k_p.ok_or(FlowError::MissingGain {
                flow: "pi".into(),
                gain: "--kp",
            })?;
            let k_i = gains.k_i.unwrap_or(1.0);
            Ok(FlowSpec::Pi { k_p, k_i })
        }
        "alm" => {
            let w = gains.w.or(gains.k_p).ok_or(FlowError::MissingGain {
                flow: "alm".into(),
                gain: "--w",
            })?;
            Ok(FlowSpec::Alm { w })
        }
        "fl" => {
            let k = gains.k.ok_or(FlowError::MissingGain {
                flow: "fl".into(),
                gain: "--k",
            })?;
            Ok(FlowSpec::Fl { k })
        }
        other => Err(FlowError::UnknownKind(other.into())),
    }
}
