//! Linear-program backends for polytope oracles.
//!
//! Three shapes cover every polytope route in this crate:
//!
//! * support over a symmetric slab polytope `{x : |⟨a_i, x⟩| ≤ 1}`,
//! * gauge via hull coefficients of `conv{±v_j}`, optionally with free
//!   variables ranging over a complement subspace (projection gauge),
//! * minimax `min_w max_i |c_i0 + ⟨d_i, w⟩|` (projection gauge of a slab
//!   polytope, support of a section of a vertex polytope).
//!
//! All are tiny dense problems; accuracy is expected at `tol::LP_REL`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::error::GeomError;

const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

fn solve(problem: Problem, what: &str) -> Result<f64, GeomError> {
    match problem.solve() {
        Ok(sol) => {
            let v = sol.objective();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(GeomError::LinearProgram(format!("{what}: non-finite objective")))
            }
        }
        Err(e) => Err(GeomError::LinearProgram(format!("{what}: {e}"))),
    }
}

/// max ⟨u, x⟩ subject to -1 ≤ rows·x ≤ 1. Requires rank(rows) = n.
pub(crate) fn support_slab(rows: &DMatrix<f64>, u: &DVector<f64>) -> Result<f64, GeomError> {
    let n = rows.ncols();
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let xs: Vec<_> = (0..n).map(|j| p.add_var(u[j], FREE)).collect();
    for i in 0..rows.nrows() {
        let terms: Vec<_> = (0..n).map(|j| (xs[j], rows[(i, j)])).collect();
        p.add_constraint(terms.as_slice(), ComparisonOp::Le, 1.0);
        p.add_constraint(terms.as_slice(), ComparisonOp::Ge, -1.0);
    }
    solve(p, "slab support")
}

/// Gauge of conv{±v_j} at `x0 + complement·w` minimized over free `w`:
/// min Σ(λ⁺+λ⁻) s.t. Σ(λ⁺_j - λ⁻_j) v_j - C·w = x0, λ ≥ 0.
/// Pass `complement = None` for the plain vertex-polytope gauge.
pub(crate) fn gauge_hull(
    verts: &DMatrix<f64>,
    x0: &DVector<f64>,
    complement: Option<&DMatrix<f64>>,
) -> Result<f64, GeomError> {
    let m = verts.nrows();
    let n = verts.ncols();
    if x0.amax() == 0.0 && complement.is_none() {
        return Ok(0.0);
    }
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let pos: Vec<_> = (0..m).map(|_| p.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let neg: Vec<_> = (0..m).map(|_| p.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let ws: Vec<_> = match complement {
        Some(c) => (0..c.ncols()).map(|_| p.add_var(0.0, FREE)).collect(),
        None => Vec::new(),
    };
    for i in 0..n {
        let mut terms = Vec::with_capacity(2 * m + ws.len());
        for j in 0..m {
            terms.push((pos[j], verts[(j, i)]));
            terms.push((neg[j], -verts[(j, i)]));
        }
        if let Some(c) = complement {
            for (t, &w) in ws.iter().enumerate() {
                terms.push((w, -c[(i, t)]));
            }
        }
        p.add_constraint(terms.as_slice(), ComparisonOp::Eq, x0[i]);
    }
    solve(p, "hull gauge").map(|v| v.max(0.0))
}

/// min over w of max_i |offsets_i + ⟨dirs_i·, w⟩|.
/// `offsets` has one entry per row of `dirs`; `dirs` may have zero columns,
/// in which case the answer is just the max absolute offset.
pub(crate) fn min_max_abs(offsets: &DVector<f64>, dirs: &DMatrix<f64>) -> Result<f64, GeomError> {
    let m = offsets.len();
    let d = dirs.ncols();
    if d == 0 {
        return Ok(offsets.amax());
    }
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let t = p.add_var(1.0, (0.0, f64::INFINITY));
    let ws: Vec<_> = (0..d).map(|_| p.add_var(0.0, FREE)).collect();
    for i in 0..m {
        let mut hi = Vec::with_capacity(d + 1);
        let mut lo = Vec::with_capacity(d + 1);
        for j in 0..d {
            hi.push((ws[j], dirs[(i, j)]));
            lo.push((ws[j], dirs[(i, j)]));
        }
        hi.push((t, -1.0));
        lo.push((t, 1.0));
        p.add_constraint(hi.as_slice(), ComparisonOp::Le, -offsets[i]);
        p.add_constraint(lo.as_slice(), ComparisonOp::Ge, -offsets[i]);
    }
    solve(p, "minimax").map(|v| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_support_matches_dual_norm() {
        // cube [-1,1]^3: h(u) = ||u||_1
        let rows = DMatrix::<f64>::identity(3, 3);
        let u = DVector::from_vec(vec![0.3, -1.2, 0.5]);
        let h = support_slab(&rows, &u).unwrap();
        assert!((h - 2.0).abs() < 1e-9);
    }

    #[test]
    fn hull_gauge_matches_l1() {
        // conv{±e_i} = B_1^3: gauge = ||x||_1
        let verts = DMatrix::<f64>::identity(3, 3);
        let x = DVector::from_vec(vec![0.25, -0.5, 0.125]);
        let g = gauge_hull(&verts, &x, None).unwrap();
        assert!((g - 0.875).abs() < 1e-9);
    }

    #[test]
    fn minimax_projection_gauge() {
        // cube^3 projected on span(e1,e2): free w on the third row only.
        let offsets = DVector::from_vec(vec![0.4, -0.9, 0.0]);
        let dirs = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let v = min_max_abs(&offsets, &dirs).unwrap();
        assert!((v - 0.9).abs() < 1e-9);
    }
}
