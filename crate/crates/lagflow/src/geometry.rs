//! Constraint-geometry kernel.
//!
//! Everything here is a pure function of `(Problem, x)` built from the
//! constraint Jacobian `J = jac_h(x)` (m×n):
//!
//! * the Gram matrix `H = JJᵀ` with a cached SPD factorization,
//! * the least-squares multiplier map `φ(x) = −H⁻¹J∇f(x)`,
//! * the orthogonal projector `P = I − JᵀH⁻¹J` onto `null(J)`,
//! * orthonormal pointwise bases of `null(J)` with optional Procrustes
//!   alignment to an anchor basis (nearby bases are only determined up to an
//!   (n−m)×(n−m) rotation; alignment makes them continuous along sample
//!   paths, which the Lipschitz estimators rely on).
//!
//! No global chart of the constraint manifold is constructed; all downstream
//! checks are phrased through these rotation-invariant ambient objects.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::problem::{PointRepr, Problem};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("Gram matrix numerically singular at x = {point} (min eig {min_eig:.3e}, max eig {max_eig:.3e})")]
    RankDeficient {
        point: PointRepr,
        min_eig: f64,
        max_eig: f64,
    },
    #[error("non-finite geometry evaluation at x = {point}")]
    NonFinite { point: PointRepr },
}

/// Gram matrix `H(x) = J(x)J(x)ᵀ` with factorization and eigenvalue extremes.
pub struct GramFactor {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pub min_eig: f64,
    pub max_eig: f64,
}

impl GramFactor {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Solve `H y = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }
}

/// Orthonormal basis of the constraint tangent space `null(J(x))`.
pub struct TangentBasis {
    /// n×(n−m), orthonormal columns.
    pub q: DMatrix<f64>,
}

const RANK_TOL: f64 = 1e-14;

/// Factor the Gram matrix at `x`. Errors when `H` is numerically singular
/// relative to its largest eigenvalue, which is how a rank-deficient
/// constraint Jacobian surfaces.
pub fn gram(p: &Problem, x: &DVector<f64>) -> Result<GramFactor, GeometryError> {
    let j = p.jac_h(x);
    let h = &j * j.transpose();
    if h.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite {
            point: PointRepr::of(x),
        });
    }
    let eigs = h.clone().symmetric_eigenvalues();
    let min_eig = eigs.min();
    let max_eig = eigs.max();
    let chol = h
        .clone()
        .cholesky()
        .filter(|_| min_eig > RANK_TOL * max_eig.max(1.0))
        .ok_or(GeometryError::RankDeficient {
            point: PointRepr::of(x),
            min_eig,
            max_eig,
        })?;
    Ok(GramFactor {
        matrix: h,
        chol,
        min_eig,
        max_eig,
    })
}

/// Least-squares multiplier `φ(x)`, the unique solution of
/// `H(x)·φ = −J(x)∇f(x)`. At a KKT point `φ(x★) = λ★`.
pub fn multiplier_ls(p: &Problem, x: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    let g = gram(p, x)?;
    let j = p.jac_h(x);
    Ok(g.solve(&(-(&j * p.grad_f(x)))))
}

/// Orthogonal projector `P(x) = I − JᵀH⁻¹J` onto the tangent space:
/// symmetric, idempotent, `P·Jᵀ = 0`, trace `n − m`.
pub fn projector(p: &Problem, x: &DVector<f64>) -> Result<DMatrix<f64>, GeometryError> {
    let g = gram(p, x)?;
    let j = p.jac_h(x);
    let n = p.primal_dim();
    Ok(DMatrix::identity(n, n) - j.transpose() * g.solve_matrix(&j))
}

/// Tangential component of the negative objective gradient, `−P(x)∇f(x)`.
/// On the constraint manifold this is the vector field of the gradient flow
/// of the restricted objective, expressed in ambient coordinates.
pub fn projected_gradient(p: &Problem, x: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    let g = gram(p, x)?;
    let j = p.jac_h(x);
    let grad = p.grad_f(x);
    Ok(j.transpose() * g.solve(&(&j * &grad)) - grad)
}

/// Orthonormal basis of `null(J(x))`.
///
/// Without an anchor the basis follows a deterministic sign convention
/// (first entry of each column with magnitude above 1e−12 is positive).
/// With an anchor, the raw basis is rotated by the orthogonal Procrustes
/// solution maximizing alignment with the anchor.
pub fn tangent_basis(
    p: &Problem,
    x: &DVector<f64>,
    anchor: Option<&TangentBasis>,
) -> Result<TangentBasis, GeometryError> {
    // Reject rank-deficient points with the same criterion as `gram`.
    let _ = gram(p, x)?;
    let j = p.jac_h(x);
    let n = p.primal_dim();
    let m = p.constraint_dim();
    let svd = j.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    // Full null space: complement of the row space within Rⁿ. nalgebra's thin
    // SVD returns only m right-singular vectors, so complete the basis by
    // projecting coordinate axes and re-orthogonalizing (modified
    // Gram-Schmidt against accepted columns).
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n - m);
    let row_space: Vec<DVector<f64>> = (0..v_t.nrows()).map(|r| v_t.row(r).transpose()).collect();
    for i in 0..n {
        if cols.len() == n - m {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for r in &row_space {
            let c = r.dot(&v);
            v -= c * r;
        }
        for c in &cols {
            let d = c.dot(&v);
            v -= d * c;
        }
        // Second orthogonalization pass for numerical safety.
        for r in &row_space {
            let c = r.dot(&v);
            v -= c * r;
        }
        for c in &cols {
            let d = c.dot(&v);
            v -= d * c;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    if cols.len() != n - m {
        return Err(GeometryError::RankDeficient {
            point: PointRepr::of(x),
            min_eig: 0.0,
            max_eig: 0.0,
        });
    }
    let mut q = DMatrix::from_columns(&cols);

    match anchor {
        None => {
            for c in 0..q.ncols() {
                let lead = q.column(c).iter().copied().find(|v| v.abs() > 1e-12);
                if let Some(lead) = lead {
                    if lead < 0.0 {
                        let neg = -q.column(c).clone_owned();
                        q.set_column(c, &neg);
                    }
                }
            }
        }
        Some(anchor) => {
            q = procrustes_align(&q, &anchor.q);
        }
    }
    Ok(TangentBasis { q })
}

/// Rotate `basis` by the orthogonal Procrustes solution so it best matches
/// `target` in Frobenius norm: `R = UVᵀ` from the SVD of `basisᵀ·target`.
fn procrustes_align(basis: &DMatrix<f64>, target: &DMatrix<f64>) -> DMatrix<f64> {
    let m = basis.transpose() * target;
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested u");
    let v_t = svd.v_t.expect("requested v_t");
    basis * (u * v_t)
}
