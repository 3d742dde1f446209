//! Estimation of the regularity constants that govern the flows'
//! convergence guarantees, and the explicit proportional-gain threshold
//! computed from them.
//!
//! All constants are localized to the problem's evaluation box: bound-type
//! constants (`m̲`, `m̄`, `B_f`, `B_h`) come from extremal scans over a
//! deterministic tensor grid, Lipschitz-type constants (`L_f`, `L_h`, `L_2`,
//! `L_q`, `L_1`) from maximal difference quotients over seeded near pairs
//! (derivative-like) and far pairs (secant growth). Where a closed-form
//! upper bound exists it is computed as well (`formula` variant); the
//! threshold always consumes the tighter of the two, since the localized
//! sampled values are what make the resulting gain bound usable at all.
//!
//! The threshold itself: with `L_r = m̄·L_2·L_Ψ` bounding the multiplier
//! mismatch term and `c̄_H = m̲/8` the certified curvature of the scaled
//! feedback quadratic form (see [`certificate_checks`]),
//!
//! ```text
//! κ = 12·L_r/m̲ + 64·L_r²/m̲² + 8·L_1²·L_r/(ρ_η²·m̲) + 128·L_1²·L_r²/(ρ_η²·m̲²)
//! ```
//!
//! and the PI flow is certified for `k_p ≥ max{1, 2k/m̲, κ}` together with
//! `k_i ≤ m̲·k_p²/2`, where `k = k_i/k_p`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError};
use crate::problem::{Problem, ProblemError};
use crate::sampling::{linspace, tensor_grid, BoxSampler};

mod certificates;
#[cfg(test)]
mod tests;

pub use certificates::{certificate_checks, CertificateCheck, CertificateReport};

/// Structural condition the estimators can catch a violation of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionKind {
    /// The constraint Jacobian must keep full row rank on the box.
    FullRowRank,
    /// The objective restricted to the feasible set must be strongly convex.
    RestrictedStrongConvexity,
}

impl std::fmt::Display for AssumptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AssumptionKind::FullRowRank => write!(f, "full row rank"),
            AssumptionKind::RestrictedStrongConvexity => {
                write!(f, "restricted strong convexity")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("{kind} assumption violated: {detail}")]
    AssumptionViolation {
        kind: AssumptionKind,
        detail: String,
        witness: Option<Vec<f64>>,
    },
    #[error("no 1-D chart available: {0}")]
    ChartUnavailable(String),
    #[error("missing input for this computation: {0}")]
    MissingInput(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

impl ConstantsError {
    pub fn is_assumption_violation(&self) -> bool {
        matches!(self, ConstantsError::AssumptionViolation { .. })
    }
}

/// Deterministic sampling plan for the estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Grid counts per axis; a single entry is broadcast. Empty means an
    /// automatic choice targeting ~40k points.
    pub grid_counts: Vec<usize>,
    pub seed: u64,
    /// Near-pair spacing as a fraction of the box diagonal.
    pub near_spacing_rel: f64,
    /// Number of near pairs and of far pairs for the difference quotients.
    pub pair_samples: usize,
    /// Number of fiber pairs for the transverse constant `L_1`.
    pub fiber_samples: usize,
    /// Deflation applied to the sampled Gram minimum (`m̲`).
    pub safety_m: f64,
    /// Deflation applied to the sampled restricted-curvature minimum.
    pub safety_rho: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            grid_counts: Vec::new(),
            seed: 7,
            near_spacing_rel: 1e-3,
            pair_samples: 4000,
            fiber_samples: 2000,
            safety_m: 0.99,
            safety_rho: 0.95,
        }
    }
}

impl SamplingPlan {
    fn effective_counts(&self, dim: usize) -> Vec<usize> {
        if !self.grid_counts.is_empty() {
            return if self.grid_counts.len() == 1 {
                vec![self.grid_counts[0].max(2); dim]
            } else {
                self.grid_counts.clone()
            };
        }
        let per_axis = (40_000f64.powf(1.0 / dim as f64).round() as usize).max(2);
        vec![per_axis; dim]
    }

    pub fn validate(&self, p: &Problem) -> Result<(), ConstantsError> {
        let counts = self.effective_counts(p.primal_dim());
        if counts.len() != p.primal_dim() {
            return Err(ConstantsError::MissingInput("one grid count per axis"));
        }
        let total: usize = counts.iter().product();
        if total < 1000 {
            return Err(ConstantsError::MissingInput(
                "grid must cover the box with at least 1000 points",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMetadata {
    pub counts: Vec<usize>,
    pub points: usize,
    pub seed: u64,
    pub near_spacing: f64,
    pub pair_samples: usize,
    pub fiber_samples: usize,
    pub safety_m: f64,
    pub safety_rho: f64,
}

/// Which route produced a constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sampled,
    Formula,
    Analytic,
}

/// Everything estimated or derived for one problem. Constants with both a
/// sampled and a formula variant carry both; consumers take the tighter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub problem: String,
    pub grid: GridMetadata,

    /// Deflated Gram eigenvalue lower bound (`m̲`).
    pub m_lower: f64,
    /// Raw sampled minimum before deflation.
    pub m_lower_raw: f64,
    /// Gram eigenvalue upper bound (`m̄`).
    pub m_upper: f64,
    /// Objective-gradient norm bound.
    pub b_f: f64,
    /// Constraint-Jacobian spectral-norm bound.
    pub b_h: f64,
    /// Lipschitz constant of `∇f` (sampled quotients).
    pub l_f: f64,
    /// Lipschitz constant of `∇h` (sampled quotients).
    pub l_h: f64,

    pub l_2_sampled: Option<f64>,
    pub l_2_formula: Option<f64>,
    /// Lipschitz constant of the aligned tangent basis (sampled).
    pub l_q: Option<f64>,
    pub l_1_sampled: Option<f64>,
    pub l_1_formula: Option<f64>,
    /// Forward-map Lipschitz bound `√(B_h² + 1)`.
    pub l_phi: Option<f64>,
    /// Inverse-map Lipschitz bound `B_h/m̲ + 1`.
    pub l_psi: Option<f64>,
    /// Multiplier-mismatch constant `m̄ · min(L_2 variants) · L_Ψ`.
    pub l_r: Option<f64>,

    /// Restricted-curvature constant (deflated).
    pub rho_eta: Option<f64>,
    pub rho_eta_raw: Option<f64>,
    pub rho_eta_provenance: Option<Provenance>,

    pub threshold: Option<ThresholdReport>,
    pub warnings: Vec<String>,
}

impl ConstantsReport {
    /// Tighter of the `L_2` variants.
    pub fn l_2_effective(&self) -> Option<f64> {
        min_opt(self.l_2_sampled, self.l_2_formula)
    }

    /// Tighter of the `L_1` variants.
    pub fn l_1_effective(&self) -> Option<f64> {
        min_opt(self.l_1_sampled, self.l_1_formula)
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

/// Threshold outputs plus the intermediates they were assembled from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// Output-decay gain `k = k_i/k_p` the threshold was evaluated at.
    pub k: f64,
    pub kappa: f64,
    pub k_p_star: f64,
    pub k_i_cap: f64,
    /// Intermediates of the derivation (cross-term bounds and the Lyapunov
    /// mixing weight).
    pub c_y: f64,
    pub c_eta: f64,
    pub mu: f64,
    pub l_r_used: f64,
    pub l_1_used: f64,
}

// ---------------------------------------------------------------------------
// Sampled bounds and difference quotients
// ---------------------------------------------------------------------------

/// Scan the grid for extremal bounds and run the difference-quotient
/// estimators. Fails with a full-row-rank violation naming the witness point
/// if the constraint Jacobian loses rank anywhere on the grid.
pub fn estimate_bounds(
    p: &Problem,
    plan: &SamplingPlan,
) -> Result<ConstantsReport, ConstantsError> {
    plan.validate(p)?;
    let counts = plan.effective_counts(p.primal_dim());
    let grid = tensor_grid(p.region(), &counts);
    let near_spacing = plan.near_spacing_rel * p.region().diagonal();

    let mut m_min = f64::INFINITY;
    let mut m_max: f64 = 0.0;
    let mut b_f: f64 = 0.0;
    for x in &grid {
        let gram = geometry::gram(p, x).map_err(|e| match e {
            GeometryError::RankDeficient { .. } => ConstantsError::AssumptionViolation {
                kind: AssumptionKind::FullRowRank,
                detail: format!("constraint Jacobian rank-deficient on the grid: {e}"),
                witness: Some(x.iter().copied().collect()),
            },
            other => ConstantsError::Geometry(other),
        })?;
        m_min = m_min.min(gram.min_eig);
        m_max = m_max.max(gram.max_eig);
        b_f = b_f.max(p.grad_f(x).norm());
    }
    let b_h = m_max.sqrt();

    let mut sampler = BoxSampler::new(plan.seed);
    let mut l_f: f64 = 0.0;
    let mut l_h: f64 = 0.0;
    let mut l_2: f64 = 0.0;
    let mut l_q: f64 = 0.0;

    let consume_pair = |p: &Problem,
                        a: &DVector<f64>,
                        b: &DVector<f64>,
                        l_f: &mut f64,
                        l_h: &mut f64,
                        l_2: &mut f64,
                        l_q: &mut f64|
     -> Result<(), ConstantsError> {
        let dist = (a - b).norm();
        if dist < 1e-12 {
            return Ok(());
        }
        *l_f = l_f.max((p.grad_f(a) - p.grad_f(b)).norm() / dist);
        *l_h = l_h.max(spectral_norm(&(p.jac_h(a) - p.jac_h(b))) / dist);
        let phi_a = geometry::multiplier_ls(p, a)?;
        let phi_b = geometry::multiplier_ls(p, b)?;
        *l_2 = l_2.max((phi_a - phi_b).norm() / dist);
        let q_a = geometry::tangent_basis(p, a, None)?;
        let q_b = geometry::tangent_basis(p, b, Some(&q_a))?;
        *l_q = l_q.max(spectral_norm(&(&q_a.q - &q_b.q)) / dist);
        Ok(())
    };

    for _ in 0..plan.pair_samples {
        // Near pair: base point plus a short random offset, clamped to box.
        let a = sampler.point(p.region());
        let dir = sampler.direction(p.primal_dim());
        let b = p.region().clamp(&(&a + near_spacing * dir));
        consume_pair(p, &a, &b, &mut l_f, &mut l_h, &mut l_2, &mut l_q)?;
    }
    for _ in 0..plan.pair_samples {
        let a = sampler.point(p.region());
        let b = sampler.point(p.region());
        consume_pair(p, &a, &b, &mut l_f, &mut l_h, &mut l_2, &mut l_q)?;
    }

    let mut warnings = Vec::new();
    let l_1_sampled = estimate_l1(p, plan, &mut sampler, near_spacing, &mut warnings)?;

    Ok(ConstantsReport {
        problem: p.name().to_string(),
        grid: GridMetadata {
            counts,
            points: grid.len(),
            seed: plan.seed,
            near_spacing,
            pair_samples: plan.pair_samples,
            fiber_samples: plan.fiber_samples,
            safety_m: plan.safety_m,
            safety_rho: plan.safety_rho,
        },
        m_lower: plan.safety_m * m_min,
        m_lower_raw: m_min,
        m_upper: m_max,
        b_f,
        b_h,
        l_f,
        l_h,
        l_2_sampled: Some(l_2),
        l_2_formula: None,
        l_q: Some(l_q),
        l_1_sampled,
        l_1_formula: None,
        l_phi: None,
        l_psi: None,
        l_r: None,
        rho_eta: None,
        rho_eta_raw: None,
        rho_eta_provenance: None,
        threshold: None,
        warnings,
    })
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Transverse-mismatch quotients over fiber pairs `(x̃, p)` with `p` the
/// manifold projection of `x̃`: the aligned tangential gradient difference
/// divided by `‖h(x̃)‖`. Uses both box samples (far fibers) and short normal
/// offsets from manifold points (near fibers).
fn estimate_l1(
    p: &Problem,
    plan: &SamplingPlan,
    sampler: &mut BoxSampler,
    near_spacing: f64,
    warnings: &mut Vec<String>,
) -> Result<Option<f64>, ConstantsError> {
    let mut best: f64 = 0.0;
    let mut attempted = 0usize;
    let mut succeeded = 0usize;

    let mut consume =
        |p: &Problem, x: &DVector<f64>, on_manifold: &DVector<f64>| -> Result<(), ConstantsError> {
            let y = p.h(x).norm();
            if y < 1e-8 {
                return Ok(());
            }
            let anchor = geometry::tangent_basis(p, on_manifold, None)?;
            let moved = geometry::tangent_basis(p, x, Some(&anchor))?;
            let g_far = moved.q.transpose() * p.grad_f(x);
            let g_near = anchor.q.transpose() * p.grad_f(on_manifold);
            best = best.max((g_far - g_near).norm() / y);
            Ok(())
        };

    for _ in 0..plan.fiber_samples {
        attempted += 1;
        let x = sampler.point(p.region());
        if let Some(pm) = project_to_manifold(p, &x) {
            succeeded += 1;
            consume(p, &x, &pm)?;
            // Near fiber: short offset along the normal bundle.
            let j = p.jac_h(&pm);
            let w = sampler.direction(p.constraint_dim());
            let normal = j.transpose() * w;
            let norm = normal.norm();
            if norm > 1e-12 {
                let x_near = &pm + (near_spacing / norm) * normal;
                if p.region().contains(&x_near) {
                    consume(p, &x_near, &pm)?;
                }
            }
        }
    }

    if succeeded * 2 < attempted {
        warnings.push(format!(
            "transverse constant: manifold projection failed for {} of {} samples; falling back to the formula variant only",
            attempted - succeeded,
            attempted
        ));
        return Ok(None);
    }
    Ok(Some(best))
}

/// Project onto `{h = 0}`: exact for affine constraints, nearest-point on
/// the chart curve for charted problems, Gauss-Newton otherwise.
pub fn project_to_manifold(p: &Problem, x: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(data) = p.quadratic_affine() {
        let gram = &data.a * data.a.transpose();
        let corr = gram.lu().solve(&(&data.a * x - &data.b))?;
        return Some(x - data.a.transpose() * corr);
    }
    if let Some(chart) = p.chart() {
        let (lo, hi) = chart.param_range;
        let dist2 = |s: f64| (chart.lift(s) - x).norm_squared();
        let grid = linspace(lo, hi, 2001);
        let (mut best_i, mut best_v) = (0usize, f64::INFINITY);
        for (i, &s) in grid.iter().enumerate() {
            let v = dist2(s);
            if v < best_v {
                best_v = v;
                best_i = i;
            }
        }
        let step = (hi - lo) / 2000.0;
        let (mut a, mut b) = ((grid[best_i] - step).max(lo), (grid[best_i] + step).min(hi));
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        for _ in 0..100 {
            let c = b - INV_PHI * (b - a);
            let d = a + INV_PHI * (b - a);
            if dist2(c) < dist2(d) {
                b = d;
            } else {
                a = c;
            }
        }
        return Some(chart.lift(0.5 * (a + b)));
    }
    // Gauss-Newton along the normal bundle.
    let mut y = x.clone();
    for _ in 0..50 {
        let hv = p.h(&y);
        if hv.norm() <= 1e-10 {
            return Some(y);
        }
        let gram = geometry::gram(p, &y).ok()?;
        let j = p.jac_h(&y);
        y -= j.transpose() * gram.solve(&hv);
        if y.iter().any(|v| !v.is_finite()) {
            return None;
        }
    }
    (p.h(&y).norm() <= 1e-10).then_some(y)
}

// ---------------------------------------------------------------------------
// Closed-form variants
// ---------------------------------------------------------------------------

/// Fill the formula variants from the sampled ingredients:
///
/// ```text
/// L_Φ = √(B_h² + 1)                       L_Ψ = B_h/m̲ + 1
/// L_2 ≤ (B_h·L_f + L_h·B_f)/m̲ + 2·B_h²·L_h·B_f/m̲²
/// L_1 ≤ L_Ψ·(L_q·B_f + L_f)
/// L_r = m̄ · min(L_2 variants) · L_Ψ
/// ```
pub fn formula_constants(report: &mut ConstantsReport) -> Result<(), ConstantsError> {
    if !(report.m_lower > 0.0) {
        return Err(ConstantsError::MissingInput("positive m_lower"));
    }
    let m_lo = report.m_lower;
    let l_psi = report.b_h / m_lo + 1.0;
    report.l_phi = Some((report.b_h * report.b_h + 1.0).sqrt());
    report.l_psi = Some(l_psi);
    report.l_2_formula = Some(
        (report.b_h * report.l_f + report.l_h * report.b_f) / m_lo
            + 2.0 * report.b_h * report.b_h * report.l_h * report.b_f / (m_lo * m_lo),
    );
    match report.l_q {
        Some(l_q) => {
            report.l_1_formula = Some(l_psi * (l_q * report.b_f + report.l_f));
        }
        None => report.warnings.push(
            "no sampled tangent-basis constant; transverse formula variant unavailable".into(),
        ),
    }
    let l_2 = report
        .l_2_effective()
        .ok_or(ConstantsError::MissingInput("an L_2 variant"))?;
    report.l_r = Some(report.m_upper * l_2 * l_psi);
    Ok(())
}

// ---------------------------------------------------------------------------
// Restricted curvature
// ---------------------------------------------------------------------------

/// Strong-convexity constant of the objective restricted to the feasible
/// set.
///
/// * quadratic/affine problems: smallest eigenvalue of the reduced Hessian
///   `ZᵀQZ` over a null-space basis of `A` (analytic, no deflation);
/// * charted problems: dense-grid central second differences of the
///   restricted objective in the chart parameter, minimum deflated by the
///   plan's safety factor;
/// * anything else: unavailable (`ChartUnavailable`).
///
/// A non-positive minimum is a restricted-strong-convexity violation and halts the
/// threshold pipeline.
pub fn estimate_rho_eta(p: &Problem, plan: &SamplingPlan) -> Result<RhoEta, ConstantsError> {
    if let Some(data) = p.quadratic_affine() {
        let z = affine_null_basis(&data.a);
        let reduced = z.transpose() * &data.q * &z;
        let min_eig = reduced.symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(ConstantsError::AssumptionViolation {
                kind: AssumptionKind::RestrictedStrongConvexity,
                detail: format!("reduced Hessian minimum eigenvalue {min_eig:.6e} is not positive"),
                witness: None,
            });
        }
        return Ok(RhoEta {
            value: min_eig,
            raw: min_eig,
            provenance: Provenance::Analytic,
        });
    }

    let chart = p.chart().ok_or_else(|| {
        ConstantsError::ChartUnavailable(
            "restricted-curvature estimation needs a 1-D chart or a quadratic/affine structure"
                .into(),
        )
    })?;
    let (lo, hi) = chart.param_range;
    let span = hi - lo;
    let fd = 2.5e-6 * span;
    let grid = linspace(lo + fd, hi - fd, 20_001);
    let g = |s: f64| p.f(&chart.lift(s));
    let mut min_curv = f64::INFINITY;
    let mut witness = lo;
    for &s in &grid {
        let curv = (g(s + fd) - 2.0 * g(s) + g(s - fd)) / (fd * fd);
        if curv < min_curv {
            min_curv = curv;
            witness = s;
        }
    }
    if !(min_curv > 0.0) {
        return Err(ConstantsError::AssumptionViolation {
            kind: AssumptionKind::RestrictedStrongConvexity,
            detail: format!(
                "restricted objective curvature {min_curv:.6e} at chart parameter {witness:.6}"
            ),
            witness: Some(chart.lift(witness).iter().copied().collect()),
        });
    }
    Ok(RhoEta {
        value: plan.safety_rho * min_curv,
        raw: min_curv,
        provenance: Provenance::Sampled,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RhoEta {
    pub value: f64,
    pub raw: f64,
    pub provenance: Provenance,
}

impl ConstantsReport {
    pub fn set_rho_eta(&mut self, rho: RhoEta) {
        self.rho_eta = Some(rho.value);
        self.rho_eta_raw = Some(rho.raw);
        self.rho_eta_provenance = Some(rho.provenance);
    }
}

fn affine_null_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let gram = a * a.transpose();
    let lu = gram.lu();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        if cols.len() == n - m {
            break;
        }
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let mut v = &e - a.transpose() * lu.solve(&(a * &e)).expect("full-rank Gram");
        for c in &cols {
            let d = c.dot(&v);
            v -= d * c;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    DMatrix::from_columns(&cols)
}

// ---------------------------------------------------------------------------
// Explicit gain threshold
// ---------------------------------------------------------------------------

/// `κ`, `k_p★ = max{1, 2k/m̲, κ}`, and the integral-gain cap
/// `k_i ≤ m̲·k_p★²/2`, using the tighter variant of each Lipschitz input.
pub fn threshold(report: &ConstantsReport, k: f64) -> Result<ThresholdReport, ConstantsError> {
    if !(k > 0.0) {
        return Err(ConstantsError::MissingInput("positive output gain k"));
    }
    let rho = report.rho_eta.ok_or(ConstantsError::MissingInput(
        "rho_eta (run estimate_rho_eta first)",
    ))?;
    let m_lo = report.m_lower;
    if !(m_lo > 0.0) {
        return Err(ConstantsError::MissingInput("positive m_lower"));
    }
    let l_r = report.l_r.ok_or(ConstantsError::MissingInput(
        "l_r (run formula_constants first)",
    ))?;
    let l_1 = report
        .l_1_effective()
        .ok_or(ConstantsError::MissingInput("an L_1 variant"))?;

    let kappa = kappa_formula(l_r, l_1, rho, m_lo);
    let k_p_star = 1.0f64.max(2.0 * k / m_lo).max(kappa);
    let k_i_cap = m_lo * k_p_star * k_p_star / 2.0;

    let c_y = 3.0 * l_r + 16.0 * l_r * l_r / m_lo;
    let c_eta = l_r + 16.0 * l_r * l_r / m_lo;
    let mu = 4.0 * c_eta / rho;

    Ok(ThresholdReport {
        k,
        kappa,
        k_p_star,
        k_i_cap,
        c_y,
        c_eta,
        mu,
        l_r_used: l_r,
        l_1_used: l_1,
    })
}

pub fn kappa_formula(l_r: f64, l_1: f64, rho_eta: f64, m_lower: f64) -> f64 {
    12.0 * l_r / m_lower
        + 64.0 * l_r * l_r / (m_lower * m_lower)
        + 8.0 * l_1 * l_1 * l_r / (rho_eta * rho_eta * m_lower)
        + 128.0 * l_1 * l_1 * l_r * l_r / (rho_eta * rho_eta * m_lower * m_lower)
}

/// Run the whole pipeline: sampled bounds, restricted curvature, formula
/// variants, threshold.
pub fn full_report(
    p: &Problem,
    plan: &SamplingPlan,
    k: f64,
) -> Result<ConstantsReport, ConstantsError> {
    let mut report = estimate_bounds(p, plan)?;
    let rho = estimate_rho_eta(p, plan)?;
    report.set_rho_eta(rho);
    formula_constants(&mut report)?;
    report.threshold = Some(threshold(&report, k)?);
    Ok(report)
}
