//! Finite-difference validation of user-supplied derivatives.

use nalgebra::{DMatrix, DVector};

use super::{PointRepr, Problem, ProblemError};
use crate::sampling::BoxSampler;

/// Worst-case relative mismatch between supplied derivatives and central
/// finite differences over seeded samples in the evaluation box.
#[derive(Debug, Clone)]
pub struct DerivativeReport {
    pub samples: usize,
    pub seed: u64,
    pub max_rel_err_grad_f: f64,
    pub worst_grad_f_point: DVector<f64>,
    pub max_rel_err_jac_h: f64,
    pub worst_jac_h_point: DVector<f64>,
}

impl DerivativeReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err_grad_f <= tol && self.max_rel_err_jac_h <= tol
    }
}

/// Compare `grad_f` against central differences of `f`, and `jac_h` against
/// central differences of `h`, at `samples` seeded points. The step along
/// coordinate `i` is `1e−6·max(1, |xᵢ|)`. Relative error is measured against
/// the finite-difference value with a small absolute floor so exact zeros do
/// not divide by zero.
pub fn validate_derivatives(
    p: &Problem,
    samples: usize,
    seed: u64,
) -> Result<DerivativeReport, ProblemError> {
    if samples == 0 {
        return Err(ProblemError::Invalid("need at least one sample".into()));
    }
    let mut sampler = BoxSampler::new(seed);
    let n = p.primal_dim();
    let m = p.constraint_dim();

    let mut report = DerivativeReport {
        samples,
        seed,
        max_rel_err_grad_f: 0.0,
        worst_grad_f_point: DVector::zeros(n),
        max_rel_err_jac_h: 0.0,
        worst_jac_h_point: DVector::zeros(n),
    };

    for _ in 0..samples {
        let x = sampler.point(p.region());

        let supplied_g = p.grad_f(&x);
        let mut fd_g = DVector::zeros(n);
        for i in 0..n {
            let step = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            fd_g[i] = (p.f(&xp) - p.f(&xm)) / (2.0 * step);
        }
        ensure_finite(&fd_g, "finite-difference gradient", &x)?;
        ensure_finite(&supplied_g, "supplied gradient", &x)?;
        let denom = fd_g.norm().max(1e-8 * (1.0 + x.norm()));
        let err = (&supplied_g - &fd_g).norm() / denom;
        if err > report.max_rel_err_grad_f {
            report.max_rel_err_grad_f = err;
            report.worst_grad_f_point = x.clone();
        }

        let supplied_j = p.jac_h(&x);
        let mut fd_j = DMatrix::zeros(m, n);
        for i in 0..n {
            let step = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            let col = (p.h(&xp) - p.h(&xm)) / (2.0 * step);
            fd_j.set_column(i, &col);
        }
        let fd_norm = fd_j.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = (&supplied_j - &fd_j)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if !fd_norm.is_finite() || !diff.is_finite() {
            return Err(ProblemError::NonFinite {
                what: "constraint Jacobian",
                point: PointRepr::of(&x),
            });
        }
        let err = diff / fd_norm.max(1e-8 * (1.0 + x.norm()));
        if err > report.max_rel_err_jac_h {
            report.max_rel_err_jac_h = err;
            report.worst_jac_h_point = x;
        }
    }
    Ok(report)
}

fn ensure_finite(
    v: &DVector<f64>,
    what: &'static str,
    x: &DVector<f64>,
) -> Result<(), ProblemError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(ProblemError::NonFinite {
            what,
            point: PointRepr::of(x),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, EvalBox};
    use std::sync::Arc;

    #[test]
    fn exact_quadratic_gradient_validates_tightly() {
        // f(x) = ½‖x‖², ∇f(x) = x: central differences are exact for
        // quadratics up to roundoff.
        let region = EvalBox::new(vec![(-2.0, 2.0); 3]).unwrap();
        let p = Problem::new(
            "half_norm_sq",
            3,
            1,
            Arc::new(|x: &DVector<f64>| 0.5 * x.norm_squared()),
            Arc::new(|x: &DVector<f64>| x.clone()),
            Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![x[0]])),
            Arc::new(|_x: &DVector<f64>| DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])),
            region,
        )
        .unwrap();
        let report = validate_derivatives(&p, 100, 11).unwrap();
        assert!(
            report.max_rel_err_grad_f <= 1e-8,
            "grad err {}",
            report.max_rel_err_grad_f
        );
        assert!(report.max_rel_err_jac_h <= 1e-8);
    }

    #[test]
    fn builtin_analytic_gradients_match_finite_differences() {
        for name in ["illustrative_2d", "quadratic_affine", "graph_quadratic"] {
            let p = builtin(name).unwrap();
            let report = validate_derivatives(&p, 100, 3).unwrap();
            assert!(
                report.passes(1e-6),
                "{name}: grad err {:.3e}, jac err {:.3e}",
                report.max_rel_err_grad_f,
                report.max_rel_err_jac_h
            );
        }
    }

    #[test]
    fn negated_gradient_is_flagged_near_two() {
        let p = builtin("illustrative_2d").unwrap();
        let broken = Problem::new(
            "negated",
            2,
            1,
            {
                let p = p.clone();
                Arc::new(move |x: &DVector<f64>| p.f(x))
            },
            {
                let p = p.clone();
                Arc::new(move |x: &DVector<f64>| -p.grad_f(x))
            },
            {
                let p = p.clone();
                Arc::new(move |x: &DVector<f64>| p.h(x))
            },
            {
                let p = p.clone();
                Arc::new(move |x: &DVector<f64>| p.jac_h(x))
            },
            p.region().clone(),
        )
        .unwrap();
        let report = validate_derivatives(&broken, 100, 5).unwrap();
        assert!(
            (report.max_rel_err_grad_f - 2.0).abs() < 1e-6,
            "negated gradient should show relative error ≈ 2, got {}",
            report.max_rel_err_grad_f
        );
        assert!(!report.passes(1e-6));
    }

    #[test]
    fn non_finite_evaluation_names_the_point() {
        let region = EvalBox::new(vec![(-1.0, 1.0); 2]).unwrap();
        let p = Problem::new(
            "nan_objective",
            2,
            1,
            Arc::new(|x: &DVector<f64>| if x[0] > 0.0 { f64::NAN } else { x[0] }),
            Arc::new(|_x: &DVector<f64>| DVector::from_vec(vec![1.0, 0.0])),
            Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![x[1]])),
            Arc::new(|_x: &DVector<f64>| DMatrix::from_row_slice(1, 2, &[0.0, 1.0])),
            region,
        )
        .unwrap();
        let err = validate_derivatives(&p, 50, 1).unwrap_err();
        assert!(matches!(err, ProblemError::NonFinite { .. }), "{err}");
    }
}
