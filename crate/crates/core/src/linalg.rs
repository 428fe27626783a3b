//! Small shared linear-algebra and special-function helpers.

use nalgebra::{DMatrix, DVector};

/// Thin QR with the sign convention diag(R) >= 0.
///
/// The convention makes the factorization unique for full-rank input, which
/// keeps Haar sampling (Gaussian matrix followed by QR) measure-correct and
/// keeps derived bases reproducible.
pub(crate) fn qr_positive(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows().min(r.ncols()) {
        if r[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
            for c in 0..r.ncols() {
                r[(j, c)] = -r[(j, c)];
            }
        }
    }
    (q, r)
}

/// Orthonormal basis of the orthogonal complement of the span of `basis`
/// (columns assumed orthonormal). Greedy Gram-Schmidt over the identity
/// columns with one re-orthogonalization pass.
pub(crate) fn complement_basis(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let k = basis.ncols();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n - k);
    for i in 0..n {
        if cols.len() == n - k {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            let coeffs = basis.tr_mul(&v);
            v -= basis * &coeffs;
            for c in &cols {
                let d = c.dot(&v);
                v -= c * d;
            }
        }
        let norm = v.norm();
        if norm > 1e-7 {
            cols.push(v / norm);
        }
    }
    debug_assert_eq!(cols.len(), n - k);
    DMatrix::from_columns(&cols)
}

/// ln Γ(x) for x > 0.
pub(crate) fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// ln |B_2^n| for the unit Euclidean ball.
pub(crate) fn log_unit_ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    0.5 * nf * std::f64::consts::PI.ln() - lgamma(1.0 + 0.5 * nf)
}

/// ln |B_p^n| for the unit l_p ball, p in [1, inf].
pub(crate) fn log_lp_ball_volume(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    if p.is_infinite() {
        return nf * (2.0f64).ln();
    }
    nf * ((2.0f64).ln() + lgamma(1.0 + 1.0 / p)) - lgamma(1.0 + nf / p)
}

