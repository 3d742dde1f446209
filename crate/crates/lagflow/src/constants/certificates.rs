//! Pointwise matrix certificates behind the gain threshold.
//!
//! At each sampled point the scaled feedback quadratic form
//!
//! ```text
//! Ψ̄(x) = ⎡ H − (k/k_p)·I   H − m̲·I ⎤          (θ = 2m̲/k)
//!        ⎣ H − m̲·I          H       ⎦
//! ```
//!
//! must satisfy `Ψ̄ ⪰ (m̲/8)·I`, and its Schur complement
//! `S = k(θ − 1/k_p)·I − (θ²k²/4)·H⁻¹` must satisfy `S ⪰ (m̲ − k/k_p)·I`.
//! Both hold for any `k_p ≥ 2k/m̲` as long as `H(x) ⪰ m̲·I`, which is what
//! the sampled check verifies. The third check is the ambient residual
//! bound `‖H(x)(φ(x★) − φ(x))‖ ≤ m̄·L_2·‖x − x★‖` tying the multiplier
//! mismatch to the distance from the optimum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ConstantsError, ConstantsReport};
use crate::geometry;
use crate::problem::{reference_solution, Problem};
use crate::sampling::BoxSampler;

/// Slack applied to every eigenvalue comparison.
const EIG_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub name: String,
    pub passed: bool,
    /// Worst observed margin (check quantity minus its bound); negative
    /// means a violation.
    pub worst_margin: f64,
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub problem: String,
    pub samples: usize,
    pub seed: u64,
    pub k: f64,
    pub k_p: f64,
    pub theta: f64,
    pub checks: Vec<CertificateCheck>,
    pub passed: bool,
}

/// Evaluate the three pointwise certificates at `samples` seeded points.
///
/// Callers are expected to pass `k_p ≥ max{2k/m̲, κ}` for the matrix bounds
/// to be guaranteed; smaller gains run fine and simply report failures with
/// a witness point.
pub fn certificate_checks(
    p: &Problem,
    report: &ConstantsReport,
    k_p: f64,
    k: f64,
    samples: usize,
    seed: u64,
) -> Result<CertificateReport, ConstantsError> {
    if !(k > 0.0) || !(k_p > 0.0) {
        return Err(ConstantsError::MissingInput("positive k and k_p"));
    }
    let m_lo = report.m_lower;
    if !(m_lo > 0.0) {
        return Err(ConstantsError::MissingInput("positive m_lower"));
    }
    let l_2 = report
        .l_2_effective()
        .ok_or(ConstantsError::MissingInput("an L_2 variant"))?;
    let theta = 2.0 * m_lo / k;
    let kkt = reference_solution(p)?;
    let phi_star = geometry::multiplier_ls(p, &kkt.x_star)?;

    let m = p.constraint_dim();
    let mut sampler = BoxSampler::new(seed);

    let mut psi = Margin::new("feedback_form_psi_bar");
    let mut schur = Margin::new("schur_complement_s");
    let mut residual = Margin::new("multiplier_residual_bound");

    for _ in 0..samples {
        let x = sampler.point(p.region());
        let gram = geometry::gram(p, &x)?;
        let h = gram.matrix();

        // Ψ̄ ⪰ (m̲/8)·I
        let mut psi_bar = DMatrix::zeros(2 * m, 2 * m);
        let top_left = h - DMatrix::from_diagonal_element(m, m, k / k_p);
        let off = h - DMatrix::from_diagonal_element(m, m, m_lo);
        psi_bar.view_mut((0, 0), (m, m)).copy_from(&top_left);
        psi_bar.view_mut((0, m), (m, m)).copy_from(&off);
        psi_bar.view_mut((m, 0), (m, m)).copy_from(&off);
        psi_bar.view_mut((m, m), (m, m)).copy_from(h);
        let psi_min = psi_bar.symmetric_eigenvalues().min();
        psi.update(psi_min - (m_lo / 8.0 - EIG_SLACK), &x);

        // S ⪰ (m̲ − k/k_p)·I
        let h_inv = gram.solve_matrix(&DMatrix::identity(m, m));
        let s = DMatrix::from_diagonal_element(m, m, k * (theta - 1.0 / k_p))
            - (theta * theta * k * k / 4.0) * h_inv;
        let s_min = s.symmetric_eigenvalues().min();
        schur.update(s_min - (m_lo - k / k_p - EIG_SLACK), &x);

        // ‖H(x)(φ(x★) − φ(x))‖ ≤ m̄·L_2·‖x − x★‖
        let phi_x = gram.solve(&(-(p.jac_h(&x) * p.grad_f(&x))));
        let lhs = (h * (&phi_star - phi_x)).norm();
        let rhs = report.m_upper * l_2 * (&x - &kkt.x_star).norm();
        residual.update(rhs - lhs + EIG_SLACK, &x);
    }

    let checks = vec![psi.into_check(), schur.into_check(), residual.into_check()];
    let passed = checks.iter().all(|c| c.passed);
    Ok(CertificateReport {
        problem: p.name().to_string(),
        samples,
        seed,
        k,
        k_p,
        theta,
        checks,
        passed,
    })
}

struct Margin {
    name: &'static str,
    worst: f64,
    witness: Option<Vec<f64>>,
}

impl Margin {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: f64::INFINITY,
            witness: None,
        }
    }

    fn update(&mut self, margin: f64, x: &DVector<f64>) {
        if margin < self.worst {
            self.worst = margin;
            self.witness = Some(x.iter().copied().collect());
        }
    }

    fn into_check(self) -> CertificateCheck {
        let passed = self.worst >= 0.0;
        CertificateCheck {
            name: self.name.to_string(),
            passed,
            worst_margin: self.worst,
            witness: if passed { None } else { self.witness },
        }
    }
}
