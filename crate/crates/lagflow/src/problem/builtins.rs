//! Built-in problem registry and JSON problem documents.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::{Chart1d, EvalBox, Problem, ProblemError, QuadraticAffineData};
use crate::sampling::linspace;

/// Build a registered problem from a name, optionally with compact inline
/// parameters:
///
/// * `illustrative_2d`
/// * `quadratic_affine`: canonical instance `Q = I, c = 0, A = [1 0], b = 1`
/// * `quadratic_affine:diag(1,4),0,[1 0],1`: `Q,c,A,b` with `I`, `diag(..)`,
///   `[r11 r12; r21 r22]`, scalars, or `(v1,v2,..)` lists
/// * `graph_quadratic`: canonical instance (see [`graph_quadratic`])
pub fn builtin(name: &str) -> Result<Problem, ProblemError> {
    let (head, params) = match name.split_once(':') {
        Some((h, p)) => (h.trim(), Some(p.trim())),
        None => (name.trim(), None),
    };
    match head {
        "illustrative_2d" => {
            if params.is_some() {
                return Err(ProblemError::Invalid(
                    "illustrative_2d takes no parameters".into(),
                ));
            }
            Ok(illustrative_2d())
        }
        "quadratic_affine" => match params {
            None => quadratic_affine(
                DMatrix::identity(2, 2),
                DVector::zeros(2),
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                DVector::from_vec(vec![1.0]),
                None,
            ),
            Some(p) => parse_quadratic_affine(p),
        },
        "graph_quadratic" => match params {
            None => graph_quadratic(
                DMatrix::identity(2, 2),
                DVector::from_vec(vec![0.3, -0.2]),
                [0.0, 0.0, 0.5],
                None,
            ),
            Some(_) => Err(ProblemError::Invalid(
                "graph_quadratic inline parameters are not supported; use a JSON problem file"
                    .into(),
            )),
        },
        other => Err(ProblemError::UnknownBuiltin(other.into())),
    }
}

/// The two-dimensional non-convex example: a quartic/cubic objective with a
/// tall Gaussian bump, constrained to the exponential graph `x₂ = e^{x₁}`.
/// The objective is non-convex on the plane (and unbounded below along the
/// cone `x₂ ≈ ±x₁`), yet its restriction to the constraint curve has a
/// single minimum inside the evaluation box.
pub fn illustrative_2d() -> Problem {
    let f: super::ScalarMap = Arc::new(|x: &DVector<f64>| {
        let (a, b) = (x[0], x[1]);
        let quartic = a * a - b * b - 1.0;
        quartic * quartic + 0.7 * (a * a * a + a * b * b) + 70.0 * bump(a, b)
    });
    let grad_f: super::VectorMap = Arc::new(|x: &DVector<f64>| {
        let (a, b) = (x[0], x[1]);
        let quartic = a * a - b * b - 1.0;
        let e = bump(a, b);
        DVector::from_vec(vec![
            4.0 * a * quartic + 0.7 * (3.0 * a * a + b * b) - 280.0 * (a - 1.0) * e,
            -4.0 * b * quartic + 1.4 * a * b - 280.0 * b * e,
        ])
    });
    let h: super::VectorMap =
        Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![x[1] - x[0].exp()]));
    let jac_h: super::MatrixMap =
        Arc::new(|x: &DVector<f64>| DMatrix::from_row_slice(1, 2, &[-x[0].exp(), 1.0]));

    let region = EvalBox::new(vec![(-3.0, 3.0), (-2.5, 2.5)]).expect("static box");
    let chart = Chart1d::new(
        (-3.0, 2.5f64.ln()),
        Arc::new(|s: f64| DVector::from_vec(vec![s, s.exp()])),
    )
    .expect("static chart");

    Problem::new("illustrative_2d", 2, 1, f, grad_f, h, jac_h, region)
        .expect("static problem")
        .with_chart(chart)
}

fn bump(a: f64, b: f64) -> f64 {
    (-2.0 * (a - 1.0) * (a - 1.0) - 2.0 * b * b).exp()
}

/// `f = ½xᵀQx + cᵀx` subject to `Ax = b`. `A` must have full row rank; `Q`
/// must be symmetric. When `n − m = 1` the feasible line gets an explicit
/// chart clipped to the box.
pub fn quadratic_affine(
    q: DMatrix<f64>,
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    region: Option<EvalBox>,
) -> Result<Problem, ProblemError> {
    let (m, n) = a.shape();
    if q.shape() != (n, n) || c.len() != n || b.len() != m {
        return Err(ProblemError::Invalid(format!(
            "inconsistent quadratic_affine shapes: Q {:?}, c {}, A {:?}, b {}",
            q.shape(),
            c.len(),
            a.shape(),
            b.len()
        )));
    }
    if (&q - q.transpose()).amax() > 1e-12 * (1.0 + q.amax()) {
        return Err(ProblemError::Invalid("Q must be symmetric".into()));
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax.max(1.0) {
        return Err(ProblemError::RankDeficient(format!(
            "A has singular values in [{smin:.3e}, {smax:.3e}]"
        )));
    }

    let region = match region {
        Some(r) => {
            if r.dim() != n {
                return Err(ProblemError::Invalid("box dimension mismatch".into()));
            }
            r
        }
        None => EvalBox::new(vec![(-3.0, 3.0); n])?,
    };

    let data = QuadraticAffineData {
        q: q.clone(),
        c: c.clone(),
        a: a.clone(),
        b: b.clone(),
    };

    let (qf, cf) = (q.clone(), c.clone());
    let f: super::ScalarMap =
        Arc::new(move |x: &DVector<f64>| 0.5 * (x.transpose() * &qf * x)[(0, 0)] + cf.dot(x));
    let (qg, cg) = (q, c);
    let grad_f: super::VectorMap = Arc::new(move |x: &DVector<f64>| &qg * x + &cg);
    let (ah, bh) = (a.clone(), b.clone());
    let h: super::VectorMap = Arc::new(move |x: &DVector<f64>| &ah * x - &bh);
    let aj = a.clone();
    let jac_h: super::MatrixMap = Arc::new(move |_x: &DVector<f64>| aj.clone());

    let mut p = Problem::new(
        "quadratic_affine",
        n,
        m,
        f,
        grad_f,
        h,
        jac_h,
        region.clone(),
    )?
    .with_quadratic_affine(data);

    if n - m == 1 {
        if let Some(chart) = affine_line_chart(&a, &b, &region) {
            p = p.with_chart(chart);
        }
    }
    Ok(p)
}

/// Chart for the affine feasible line `{x_p + s·d}` clipped to the box.
fn affine_line_chart(a: &DMatrix<f64>, b: &DVector<f64>, region: &EvalBox) -> Option<Chart1d> {
    let n = a.ncols();
    let gram = a * a.transpose();
    let x_p = a.transpose() * gram.clone().lu().solve(b)?;
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t?;
    // Rows of v_t beyond the m leading ones span null(A) when A is wide and
    // full rank; nalgebra returns only min(m,n) rows, so recover the null
    // direction by projecting coordinate axes instead.
    drop(v_t);
    let mut d = DVector::zeros(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let proj = &e - a.transpose() * gram.clone().lu().solve(&(a * &e))?;
        if proj.norm() > d.norm() {
            d = proj;
        }
    }
    if d.norm() < 1e-10 {
        return None;
    }
    d /= d.norm();
    // Deterministic orientation.
    if let Some(first) = d.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            d = -d;
        }
    }

    let (mut s_lo, mut s_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, &(lo, hi)) in region.bounds().iter().enumerate() {
        if d[i].abs() < 1e-14 {
            if x_p[i] < lo || x_p[i] > hi {
                return None;
            }
            continue;
        }
        let (s1, s2) = ((lo - x_p[i]) / d[i], (hi - x_p[i]) / d[i]);
        s_lo = s_lo.max(s1.min(s2));
        s_hi = s_hi.min(s1.max(s2));
    }
    if !(s_lo < s_hi) || !s_lo.is_finite() || !s_hi.is_finite() {
        return None;
    }
    let lift: super::LiftMap = Arc::new(move |s: f64| &x_p + s * &d);
    Chart1d::new((s_lo, s_hi), lift).ok()
}

/// Quadratic objective on a parabolic graph constraint
/// `h(x) = x₂ − (g₀ + g₁x₁ + g₂x₁²)`: a nonlinear-constraint test problem
/// with an explicit chart.
pub fn graph_quadratic(
    q: DMatrix<f64>,
    c: DVector<f64>,
    g: [f64; 3],
    region: Option<EvalBox>,
) -> Result<Problem, ProblemError> {
    if q.shape() != (2, 2) || c.len() != 2 {
        return Err(ProblemError::Invalid(
            "graph_quadratic is two-dimensional: Q must be 2×2, c length 2".into(),
        ));
    }
    if (&q - q.transpose()).amax() > 1e-12 * (1.0 + q.amax()) {
        return Err(ProblemError::Invalid("Q must be symmetric".into()));
    }
    let region = match region {
        Some(r) => {
            if r.dim() != 2 {
                return Err(ProblemError::Invalid("box dimension mismatch".into()));
            }
            r
        }
        None => EvalBox::new(vec![(-2.0, 2.0), (-2.0, 2.0)])?,
    };

    let graph = move |t: f64| g[0] + g[1] * t + g[2] * t * t;
    let graph_slope = move |t: f64| g[1] + 2.0 * g[2] * t;

    let (qf, cf) = (q.clone(), c.clone());
    let f: super::ScalarMap =
        Arc::new(move |x: &DVector<f64>| 0.5 * (x.transpose() * &qf * x)[(0, 0)] + cf.dot(x));
    let (qg, cg) = (q, c);
    let grad_f: super::VectorMap = Arc::new(move |x: &DVector<f64>| &qg * x + &cg);
    let h: super::VectorMap =
        Arc::new(move |x: &DVector<f64>| DVector::from_vec(vec![x[1] - graph(x[0])]));
    let jac_h: super::MatrixMap =
        Arc::new(move |x: &DVector<f64>| DMatrix::from_row_slice(1, 2, &[-graph_slope(x[0]), 1.0]));

    // Largest contiguous parameter window whose lift stays inside the box.
    let (lo1, hi1) = region.bounds()[0];
    let (lo2, hi2) = region.bounds()[1];
    let ts = linspace(lo1, hi1, 4001);
    let mut best: Option<(f64, f64)> = None;
    let mut run_start: Option<f64> = None;
    for (i, &t) in ts.iter().enumerate() {
        let inside = graph(t) >= lo2 && graph(t) <= hi2;
        if inside && run_start.is_none() {
            run_start = Some(t);
        }
        let run_ends = !inside || i == ts.len() - 1;
        if run_ends {
            if let Some(s) = run_start.take() {
                let e = if inside { t } else { ts[i - 1] };
                if best.is_none_or(|(a, b)| e - s > b - a) {
                    best = Some((s, e));
                }
            }
        }
    }
    let (s_lo, s_hi) = best.ok_or_else(|| {
        ProblemError::Invalid("graph constraint never enters the evaluation box".into())
    })?;
    let chart = Chart1d::new(
        (s_lo, s_hi),
        Arc::new(move |s: f64| DVector::from_vec(vec![s, graph(s)])),
    )?;

    Ok(Problem::new("graph_quadratic", 2, 1, f, grad_f, h, jac_h, region)?.with_chart(chart))
}

// ---------------------------------------------------------------------------
// Compact inline parameter syntax
// ---------------------------------------------------------------------------

fn parse_quadratic_affine(params: &str) -> Result<Problem, ProblemError> {
    let parts = split_top_level(params);
    if parts.len() != 4 {
        return Err(ProblemError::Invalid(format!(
            "quadratic_affine parameters must be `Q,c,A,b`, got `{params}`"
        )));
    }
    let a = parse_matrix(&parts[2])?;
    let n = a.ncols();
    let q = match parts[0].as_str() {
        "I" => DMatrix::identity(n, n),
        s if s.starts_with("diag(") && s.ends_with(')') => {
            let vals = parse_list(&s[5..s.len() - 1])?;
            if vals.len() != n {
                return Err(ProblemError::Invalid(format!("diag(..) needs {n} entries")));
            }
            DMatrix::from_diagonal(&DVector::from_vec(vals))
        }
        s if s.starts_with('[') => parse_matrix(s)?,
        "0" => DMatrix::zeros(n, n),
        other => {
            return Err(ProblemError::Invalid(format!(
                "cannot parse Q from `{other}`"
            )))
        }
    };
    let c = parse_vector(&parts[1], n)?;
    let b = parse_vector(&parts[3], a.nrows())?;
    quadratic_affine(q, c, a, b, None)
}

/// Split on commas at bracket depth zero.
fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '[' | '(' => {
                depth += 1;
                cur.push(ch);
            }
            ']' | ')' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur = String::new();
            }
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_list(s: &str) -> Result<Vec<f64>, ProblemError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| ProblemError::Invalid(format!("cannot parse number `{v}`")))
        })
        .collect()
}

/// `[r11 r12; r21 r22]`: rows separated by `;`, entries by whitespace.
fn parse_matrix(s: &str) -> Result<DMatrix<f64>, ProblemError> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| ProblemError::Invalid(format!("matrix `{s}` must be bracketed")))?;
    let rows: Vec<Vec<f64>> = inner
        .split(';')
        .map(|row| {
            row.split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| ProblemError::Invalid(format!("cannot parse number `{v}`")))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(ProblemError::Invalid(format!("ragged matrix `{s}`")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn parse_vector(s: &str, len: usize) -> Result<DVector<f64>, ProblemError> {
    let s = s.trim();
    if s == "0" {
        return Ok(DVector::zeros(len));
    }
    let vals = if s.starts_with('(') && s.ends_with(')') {
        parse_list(&s[1..s.len() - 1])?
    } else {
        vec![s
            .parse::<f64>()
            .map_err(|_| ProblemError::Invalid(format!("cannot parse number `{s}`")))?]
    };
    if vals.len() != len {
        return Err(ProblemError::Invalid(format!(
            "expected {len} entries, got {}",
            vals.len()
        )));
    }
    Ok(DVector::from_vec(vals))
}

// ---------------------------------------------------------------------------
// JSON problem documents
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct ProblemDoc {
    name: Option<String>,
    kind: String,
    n: Option<usize>,
    m: Option<usize>,
    #[serde(rename = "box")]
    region: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    parameters: serde_json::Value,
}

/// Load a problem from a JSON document:
///
/// ```json
/// {"kind": "quadratic_affine",
///  "box": [[-3, 3], [-3, 3]],
///  "parameters": {"q": [[1,0],[0,4]], "c": [0,0], "a": [[1,0]], "b": [1]}}
/// ```
///
/// `kind` is one of `builtin` (with `parameters.builtin` naming the
/// registered problem), `quadratic_affine`, or `graph_quadratic`
/// (`parameters.g` giving the graph coefficients `[g0, g1, g2]`).
pub fn from_json(text: &str) -> Result<Problem, ProblemError> {
    let doc: ProblemDoc = serde_json::from_str(text)?;
    let region = doc
        .region
        .map(|b| EvalBox::new(b.into_iter().map(|[lo, hi]| (lo, hi)).collect()))
        .transpose()?;

    let mut p = match doc.kind.as_str() {
        "builtin" => {
            let name = doc
                .parameters
                .get("builtin")
                .and_then(|v| v.as_str())
                .ok_or_else(|| {
                    ProblemError::Invalid("kind `builtin` needs parameters.builtin".into())
                })?;
            builtin(name)?
        }
        "quadratic_affine" => {
            let p: QuadraticAffineParams = serde_json::from_value(doc.parameters)?;
            quadratic_affine(
                matrix_from_rows(&p.q)?,
                DVector::from_vec(p.c),
                matrix_from_rows(&p.a)?,
                DVector::from_vec(p.b),
                region.clone(),
            )?
        }
        "graph_quadratic" => {
            let p: GraphQuadraticParams = serde_json::from_value(doc.parameters)?;
            graph_quadratic(
                matrix_from_rows(&p.q)?,
                DVector::from_vec(p.c),
                p.g,
                region.clone(),
            )?
        }
        other => return Err(ProblemError::UnknownBuiltin(other.into())),
    };

    if let Some(n) = doc.n {
        if n != p.primal_dim() {
            return Err(ProblemError::Invalid(format!(
                "declared n = {n} but problem has n = {}",
                p.primal_dim()
            )));
        }
    }
    if let Some(m) = doc.m {
        if m != p.constraint_dim() {
            return Err(ProblemError::Invalid(format!(
                "declared m = {m} but problem has m = {}",
                p.constraint_dim()
            )));
        }
    }
    if let Some(name) = doc.name {
        p.name = name;
    }
    Ok(p)
}

#[derive(Deserialize)]
struct QuadraticAffineParams {
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Deserialize)]
struct GraphQuadraticParams {
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    g: [f64; 3],
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ProblemError> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(ProblemError::Invalid("ragged or empty matrix".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

// ---------------------------------------------------------------------------
// Committed golden reference data
// ---------------------------------------------------------------------------

/// Reference solution and restricted-curvature value for `illustrative_2d`,
/// computed once by the grid + golden-section oracle in
/// [`super::reference_solution`] and committed together with the oracle
/// parameters that produced it.
#[derive(Debug, Clone, Deserialize)]
pub struct GoldenReference {
    pub problem: String,
    pub x_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub f_star: f64,
    pub rho_eta: f64,
    pub oracle: serde_json::Value,
}

pub fn golden_illustrative_2d() -> GoldenReference {
    serde_json::from_str(include_str!("../../data/illustrative_2d_golden.json"))
        .expect("committed golden data parses")
}
