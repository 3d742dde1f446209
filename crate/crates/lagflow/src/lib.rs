//! Continuous-time flows for equality-constrained optimization
//!
//! ```text
//!     min f(x)   s.t.   h(x) = 0,     f: Rⁿ → R,  h: Rⁿ → Rᵐ,  m < n
//! ```
//!
//! where the constraint Jacobian has full row rank on the region of interest.
//! The crate implements a family of interchangeable dynamics whose equilibria
//! are KKT points:
//!
//! * `pdgd`: primal-dual (saddle) gradient flow, pure integral multiplier,
//! * `pi`  : proportional-integral multiplier feedback,
//! * `alm` : augmented-Lagrangian flow (a `pi` instance with `k_p = w`, `k_i = 1`),
//! * `fl`  : feedback linearization: the multiplier is solved from an m×m
//!   system so the constraint output obeys a prescribed stable law.
//!
//! Each variant lives behind the [`flows::Dynamics`] trait and is built by
//! name through [`flows::build`], so front ends can select the dynamics at
//! runtime. Supporting machinery: constraint geometry kernels ([`geometry`]),
//! ODE integration with convergence/divergence event detection and a
//! linearly-implicit mode for very large proportional gains ([`integrate`]),
//! estimation of the regularity constants and the explicit proportional-gain
//! threshold with pointwise matrix certificates ([`constants`]), and post-hoc
//! rate diagnostics ([`analysis`]).
//!
//! ```
//! use lagflow::flows::FlowSpec;
//! use lagflow::integrate::{integrate, IntegrateConfig, Outcome};
//! use lagflow::problem::{builtin, reference_solution};
//! use nalgebra::dvector;
//!
//! let problem = builtin("quadratic_affine")?;
//! let flow = FlowSpec::Fl { k: 2.0 }.dynamics()?;
//! let cfg = IntegrateConfig { t_max: 40.0, ..Default::default() };
//! let traj = integrate(&problem, flow.as_ref(), &dvector![2.0, 1.5], None, &cfg)?;
//! assert_eq!(traj.outcome, Outcome::Converged);
//!
//! let kkt = reference_solution(&problem)?;
//! assert!((&traj.final_state().x - &kkt.x_star).norm() < 1e-5);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

// Validation deliberately writes `!(v > 0.0)` so NaN gains and tolerances
// are rejected along with non-positive ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod constants;
pub mod flows;
pub mod geometry;
pub mod integrate;
pub mod problem;
pub mod sampling;

pub use problem::{EvalBox, KktPoint, Problem};
