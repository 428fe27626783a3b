//! Convex programs behind the generic section/projection oracles.
//!
//! Both hard cases reduce to minimizing a convex positively-homogeneous
//! oracle over an affine slice:
//!
//! * projection gauge: `‖y‖_{P_E K} = min_{z ⊥ E} ‖B y + z‖_K`,
//! * section support: `h_{K ∩ E}(y) = min_{z ⊥ E} h_K(B y + z)`,
//!
//! and the gauge of a body known only through its support function is the
//! scale-invariant ascent `‖x‖_K = sup_{u ≠ 0} ⟨x, u⟩ / h_K(u)`.
//!
//! Any local optimum of either problem is global (linear objective over a
//! convex set), so descent with backtracking plus a compass polish reaches
//! `tol::PROGRAM_REL` on smooth oracles; polytopes never take this path,
//! they route through linear programs.

use nalgebra::{DMatrix, DVector};

const MAX_ITERS: usize = 400;
const STALL_REL: f64 = 1e-12;

/// Minimize `phi(x0 + comp·w)` over `w`. `phi` must be convex.
pub(crate) fn min_over_affine<F>(phi: F, x0: &DVector<f64>, comp: &DMatrix<f64>) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = comp.ncols();
    if d == 0 {
        return phi(x0);
    }
    let eval = |w: &DVector<f64>| phi(&(x0 + comp * w));
    let mut w = DVector::zeros(d);
    let mut f = eval(&w);
    if !f.is_finite() {
        return f;
    }
    let scale = 1.0 + x0.norm();

    // Gradient descent with numeric central differences and backtracking.
    let mut stalls = 0;
    for _ in 0..MAX_ITERS {
        let h = 1e-6 * (1.0 + w.norm());
        let mut grad = DVector::zeros(d);
        for j in 0..d {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            grad[j] = (eval(&wp) - eval(&wm)) / (2.0 * h);
        }
        let gnorm = grad.norm();
        if gnorm < 1e-14 * (1.0 + f.abs()) {
            break;
        }
        let mut alpha = scale / gnorm.max(1e-30);
        let mut improved = false;
        for _ in 0..60 {
            let cand = &w - &grad * alpha;
            let fc = eval(&cand);
            if fc < f - 1e-4 * alpha * gnorm * gnorm {
                let rel = (f - fc) / (1.0 + f.abs());
                w = cand;
                f = fc;
                improved = true;
                if rel < STALL_REL {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            stalls += 1;
        }
        if stalls >= 3 {
            break;
        }
    }

    // Compass polish for the last digits (robust near mild kinks).
    let mut step = 1e-2 * (1.0 + w.norm());
    while step > 1e-10 * scale {
        let mut moved = false;
        for j in 0..d {
            for sgn in [1.0, -1.0] {
                let mut cand = w.clone();
                cand[j] += sgn * step;
                let fc = eval(&cand);
                if fc < f {
                    w = cand;
                    f = fc;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    f
}

/// Gauge of the body `{x : ⟨x, u⟩ ≤ h(u) ∀u}` from its support oracle.
/// `h_and_grad` returns the support value and its gradient at `u`.
pub(crate) fn gauge_from_support<F>(h_and_grad: F, x: &DVector<f64>) -> f64
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let xnorm = x.norm();
    if xnorm == 0.0 {
        return 0.0;
    }
    let n = x.len();
    let mut starts = vec![x / xnorm];
    let mut imax = 0;
    for i in 1..n {
        if x[i].abs() > x[imax].abs() {
            imax = i;
        }
    }
    let mut axis = DVector::zeros(n);
    axis[imax] = x[imax].signum();
    starts.push(axis);

    let mut best = 0.0f64;
    for start in starts {
        let mut u = start;
        let (mut h, mut g) = h_and_grad(&u);
        if !(h.is_finite() && h > 0.0) {
            return f64::NAN;
        }
        let mut val = x.dot(&u) / h;
        for _ in 0..MAX_ITERS {
            // Riemannian gradient of u ↦ ⟨x,u⟩/h(u) on the unit sphere.
            let mut grad = x / h - &g * (val / h);
            let rad = grad.dot(&u);
            grad -= &u * rad;
            let gnorm = grad.norm();
            if gnorm < 1e-13 * (1.0 + val.abs()) {
                break;
            }
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..50 {
                let mut cand = &u + &grad * alpha;
                let cn = cand.norm();
                if cn > 1e-14 {
                    cand /= cn;
                    let (hc, gc) = h_and_grad(&cand);
                    if hc.is_finite() && hc > 0.0 {
                        let vc = x.dot(&cand) / hc;
                        if vc > val + 1e-12 * val.abs() {
                            u = cand;
                            h = hc;
                            g = gc;
                            val = vc;
                            improved = true;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.max(val);
    }
    best.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_min_of_euclidean_norm_is_orthogonal_distance() {
        // min_w |x0 + w e3|_2 is attained by zeroing the third coordinate.
        let x0 = DVector::from_vec(vec![3.0, 4.0, 5.0]);
        let comp = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let v = min_over_affine(|z| z.norm(), &x0, &comp);
        assert!((v - 5.0).abs() < 1e-7);
    }

    #[test]
    fn gauge_recovered_from_euclidean_support() {
        // h(u) = |u|_2 is the support of B_2; gauge must be |x|_2.
        let x = DVector::from_vec(vec![0.6, -0.8, 1.2]);
        let g = gauge_from_support(|u: &DVector<f64>| (u.norm(), u / u.norm()), &x);
        assert!((g - x.norm()).abs() < 1e-8);
    }
}
