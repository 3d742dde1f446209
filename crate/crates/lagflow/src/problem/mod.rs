//! Equality-constrained problem definitions.
//!
//! A [`Problem`] bundles the objective, the constraint map, their first
//! derivatives, and an axis-aligned evaluation box. All global regularity
//! constants produced by [`crate::constants`] are localized to that box, so
//! the box is part of the problem definition rather than a solver option:
//! it stands in for the compact forward-invariant region the trajectories
//! of interest evolve in. Derivatives are user-supplied analytic maps and
//! can be checked against central finite differences with
//! [`validate_derivatives`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

mod builtins;
mod reference;
mod validate;

pub use builtins::{
    builtin, from_json, golden_illustrative_2d, graph_quadratic, illustrative_2d, quadratic_affine,
    GoldenReference,
};
pub use reference::reference_solution;
pub use validate::{validate_derivatives, DerivativeReport};

pub type ScalarMap = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type LiftMap = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown builtin problem `{0}`")]
    UnknownBuiltin(String),
    #[error("invalid problem definition: {0}")]
    Invalid(String),
    #[error("constraint Jacobian is rank deficient: {0}")]
    RankDeficient(String),
    #[error("non-finite {what} evaluation at x = {point}")]
    NonFinite {
        what: &'static str,
        point: PointRepr,
    },
    #[error("no 1-D chart available and problem is not quadratic_affine; reference solution unsupported")]
    ReferenceUnsupported,
    #[error("restricted objective has non-unique minimum near s = {0} and s = {1}")]
    AmbiguousMinimum(f64, f64),
    #[error("objective is degenerate on the feasible set (no strongly convex minimum): {0}")]
    DegenerateObjective(String),
    #[error("problem JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Display helper so errors can name the offending point.
#[derive(Debug, Clone)]
pub struct PointRepr(pub Vec<f64>);

impl fmt::Display for PointRepr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

impl PointRepr {
    pub fn of(x: &DVector<f64>) -> Self {
        Self(x.iter().copied().collect())
    }
}

/// Axis-aligned evaluation region.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBox {
    bounds: Vec<(f64, f64)>,
}

impl EvalBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, ProblemError> {
        if bounds.is_empty() {
            return Err(ProblemError::Invalid("empty evaluation box".into()));
        }
        for &(lo, hi) in &bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ProblemError::Invalid(format!(
                    "degenerate box interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    pub fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            x.iter()
                .zip(&self.bounds)
                .map(|(&v, &(lo, hi))| v.clamp(lo, hi)),
        )
    }

    /// Euclidean length of the main diagonal.
    pub fn diagonal(&self) -> f64 {
        self.bounds
            .iter()
            .map(|&(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }
}

/// Explicit 1-D parametrization of the feasible curve, available for graph
/// constraints `h(x) = x₂ − g(x₁)` and for affine constraints with a
/// one-dimensional null space. `lift` embeds the curve parameter into Rⁿ
/// with `h(lift(s)) = 0` identically.
#[derive(Clone)]
pub struct Chart1d {
    pub param_range: (f64, f64),
    lift: LiftMap,
}

impl Chart1d {
    pub fn new(param_range: (f64, f64), lift: LiftMap) -> Result<Self, ProblemError> {
        if !(param_range.0 < param_range.1) {
            return Err(ProblemError::Invalid(format!(
                "degenerate chart range [{}, {}]",
                param_range.0, param_range.1
            )));
        }
        Ok(Self { param_range, lift })
    }

    pub fn lift(&self, s: f64) -> DVector<f64> {
        (self.lift)(s)
    }
}

impl fmt::Debug for Chart1d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart1d")
            .field("param_range", &self.param_range)
            .finish_non_exhaustive()
    }
}

/// Equality-constrained problem with analytic first derivatives.
///
/// Evaluator maps must be pure: `Problem` values are immutable after
/// construction and are shared freely across threads.
#[derive(Clone)]
pub struct Problem {
    name: String,
    n: usize,
    m: usize,
    f: ScalarMap,
    grad_f: VectorMap,
    h: VectorMap,
    jac_h: MatrixMap,
    region: EvalBox,
    chart: Option<Chart1d>,
    /// Present for `f = ½xᵀQx + cᵀx`, `h = Ax − b`; unlocks exact reference
    /// solutions and reduced-Hessian curvature.
    quadratic_affine: Option<QuadraticAffineData>,
}

#[derive(Clone, Debug)]
pub struct QuadraticAffineData {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("box", &self.region)
            .field("chart", &self.chart.is_some())
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        f: ScalarMap,
        grad_f: VectorMap,
        h: VectorMap,
        jac_h: MatrixMap,
        region: EvalBox,
    ) -> Result<Self, ProblemError> {
        if m == 0 || m >= n {
            return Err(ProblemError::Invalid(format!(
                "need 0 < m < n, got n = {n}, m = {m}"
            )));
        }
        if region.dim() != n {
            return Err(ProblemError::Invalid(format!(
                "box dimension {} does not match n = {n}",
                region.dim()
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            m,
            f,
            grad_f,
            h,
            jac_h,
            region,
            chart: None,
            quadratic_affine: None,
        })
    }

    pub fn with_chart(mut self, chart: Chart1d) -> Self {
        self.chart = Some(chart);
        self
    }

    pub(crate) fn with_quadratic_affine(mut self, data: QuadraticAffineData) -> Self {
        self.quadratic_affine = Some(data);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn primal_dim(&self) -> usize {
        self.n
    }

    pub fn constraint_dim(&self) -> usize {
        self.m
    }

    pub fn region(&self) -> &EvalBox {
        &self.region
    }

    pub fn chart(&self) -> Option<&Chart1d> {
        self.chart.as_ref()
    }

    pub fn quadratic_affine(&self) -> Option<&QuadraticAffineData> {
        self.quadratic_affine.as_ref()
    }

    pub fn f(&self, x: &DVector<f64>) -> f64 {
        (self.f)(x)
    }

    pub fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad_f)(x)
    }

    pub fn h(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.h)(x)
    }

    /// Constraint Jacobian, m×n; row i is the gradient of the i-th constraint.
    pub fn jac_h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_h)(x)
    }

    /// Objective along the chart, `f(lift(s))`.
    pub fn restricted_f(&self, s: f64) -> Option<f64> {
        self.chart.as_ref().map(|c| self.f(&c.lift(s)))
    }

    /// KKT residual pair `(‖∇f(x) + ∇h(x)ᵀ… λ‖, ‖h(x)‖)` for an explicit
    /// multiplier guess.
    pub fn kkt_residual(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Result<(f64, f64), ProblemError> {
        let g = self.grad_f(x);
        let j = self.jac_h(x);
        let hv = self.h(x);
        let stat = (&g + j.transpose() * lambda).norm();
        let feas = hv.norm();
        if !stat.is_finite() || !feas.is_finite() {
            return Err(ProblemError::NonFinite {
                what: "KKT residual",
                point: PointRepr::of(x),
            });
        }
        Ok((stat, feas))
    }
}

/// Primal-dual pair with its optimality residuals.
#[derive(Debug, Clone)]
pub struct KktPoint {
    pub x_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
    pub stationarity_residual: f64,
    pub feasibility_residual: f64,
    /// Tolerance both residuals were verified against, when certified.
    pub certified_tol: Option<f64>,
}

impl KktPoint {
    pub fn new(p: &Problem, x: DVector<f64>, lambda: DVector<f64>) -> Result<Self, ProblemError> {
        let (stat, feas) = p.kkt_residual(&x, &lambda)?;
        Ok(Self {
            x_star: x,
            lambda_star: lambda,
            stationarity_residual: stat,
            feasibility_residual: feas,
            certified_tol: None,
        })
    }

    /// Mark the point certified after checking both residuals against `tol`.
    pub fn certify(mut self, tol: f64) -> Result<Self, ProblemError> {
        if self.stationarity_residual > tol || self.feasibility_residual > tol {
            return Err(ProblemError::Invalid(format!(
                "KKT residuals ({:.3e}, {:.3e}) exceed certification tolerance {tol:.3e}",
                self.stationarity_residual, self.feasibility_residual
            )));
        }
        self.certified_tol = Some(tol);
        Ok(self)
    }
}
