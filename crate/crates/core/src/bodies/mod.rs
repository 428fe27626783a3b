//! Origin-symmetric convex bodies as support/gauge/membership oracles.
//!
//! A `Body` pairs a structural representation with the two dual convex
//! functions that drive everything downstream:
//!
//! * the support function `h_K(u) = sup_{x ∈ K} ⟨x, u⟩`,
//! * the gauge (Minkowski functional) `‖x‖_K = inf{t > 0 : x ∈ tK}`,
//!
//! linked through polarity by `h_{K°} = ‖·‖_K` and `‖·‖_{K°} = h_K`.
//!
//! Closed forms are used whenever the representation admits them; facet and
//! vertex polytopes route through small dense LPs; sections and projections
//! without a structural simplification fall back to the convex programs in
//! [`program`], using the exact dualities
//!
//! * `P_E(K°) = (K ∩ E)°` and `(P_E K)° = K° ∩ E`,
//! * `h_{K∩E}(u) = min_{z ⊥ E} h_K(Bu + z)`,
//! * `‖y‖_{P_E K} = min_{z ⊥ E} ‖By + z‖_K`.
//!
//! Transform constructors simplify structurally where the result is exact
//! (sections of ellipsoids are ellipsoids, linear images of facet polytopes
//! are facet polytopes, ...), so the cheap oracle is used automatically.
//! Bodies are immutable; transforms share their operand via `Arc`.

mod lp;
mod program;
pub mod schema;

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::GeomError;
use crate::linalg;
use crate::tol;

/// A linear subspace of R^n carried as an orthonormal basis (n×k columns)
/// together with an orthonormal basis of its orthogonal complement.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
    complement: DMatrix<f64>,
}

impl Subspace {
    /// Build from a matrix whose columns are the basis vectors; columns must
    /// be orthonormal within `tol::ORTHONORMAL_TOL`.
    pub fn new(basis: DMatrix<f64>) -> Result<Self, GeomError> {
        let n = basis.nrows();
        let k = basis.ncols();
        if k == 0 || k > n {
            return Err(GeomError::InvalidSubspace(format!(
                "basis must have 1..=n columns, got {k} of dimension {n}"
            )));
        }
        let gram = basis.tr_mul(&basis);
        let defect = (&gram - DMatrix::<f64>::identity(k, k)).amax();
        if defect > tol::ORTHONORMAL_TOL {
            return Err(GeomError::InvalidSubspace(format!(
                "basis not orthonormal (defect {defect:.2e})"
            )));
        }
        Ok(Self::from_orthonormal(basis))
    }

    /// Internal constructor for bases that are orthonormal by construction.
    pub(crate) fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        let n = basis.nrows();
        let k = basis.ncols();
        let complement = if k == n {
            DMatrix::zeros(n, 0)
        } else {
            linalg::complement_basis(&basis)
        };
        Subspace { basis, complement }
    }

    /// Coordinate subspace spanned by the given axes.
    pub fn from_axes(n: usize, axes: &[usize]) -> Result<Self, GeomError> {
        let mut seen = vec![false; n];
        for &a in axes {
            if a >= n || seen[a] {
                return Err(GeomError::InvalidSubspace(format!(
                    "axis list must be distinct indices below {n}"
                )));
            }
            seen[a] = true;
        }
        let mut basis = DMatrix::zeros(n, axes.len());
        for (j, &a) in axes.iter().enumerate() {
            basis[(a, j)] = 1.0;
        }
        Ok(Self::from_orthonormal(basis))
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub(crate) fn complement(&self) -> &DMatrix<f64> {
        &self.complement
    }

    /// Embed subspace coordinates into the ambient space: `y ↦ B y`.
    pub fn lift(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.basis * y
    }

    /// Orthogonal coordinates of an ambient vector: `x ↦ Bᵀ x`.
    pub fn restrict(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(x)
    }
}

#[derive(Debug, Clone)]
enum Rep {
    EuclideanBall {
        radius: f64,
    },
    LpBall {
        p: f64,
        radius: f64,
    },
    Ellipsoid {
        shape: DMatrix<f64>,
        inv_shape: DMatrix<f64>,
        log_det: f64,
    },
    /// `{x : |⟨a_i, x⟩| ≤ 1}` with the `a_i` as rows; rows span R^n.
    HPolytope {
        rows: DMatrix<f64>,
    },
    /// `conv{±v_j}` with the `v_j` as rows; vertices span R^n.
    VPolytope {
        verts: DMatrix<f64>,
    },
    /// Body with support `u ↦ (mean_i |⟨x_i, u⟩|^q)^{1/q}` over a fixed
    /// sample matrix (rows are sample points). Realizes empirical
    /// L_q-centroid bodies; one sample matrix is shared across directions.
    SampledCentroid {
        samples: Arc<DMatrix<f64>>,
        q: f64,
    },
    LinearImage {
        inner: Arc<Body>,
        map: DMatrix<f64>,
        inv: DMatrix<f64>,
        log_abs_det: f64,
    },
    Polar {
        inner: Arc<Body>,
    },
    Section {
        inner: Arc<Body>,
        sub: Subspace,
    },
    Projection {
        inner: Arc<Body>,
        sub: Subspace,
    },
    Scaled {
        inner: Arc<Body>,
        factor: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Body {
    dim: usize,
    rep: Rep,
}

fn dual_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

fn norm_lp(x: &DVector<f64>, p: f64) -> f64 {
    if p.is_infinite() {
        return x.amax();
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    if p == 2.0 {
        return x.norm();
    }
    let m = x.amax();
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = x.iter().map(|v| (v.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

impl Body {
    fn from_rep(dim: usize, rep: Rep) -> Body {
        Body { dim, rep }
    }

    pub fn euclidean_ball(dim: usize, radius: f64) -> Result<Body, GeomError> {
        if dim == 0 {
            return Err(GeomError::InvalidBody("dimension must be positive".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeomError::InvalidBody(format!("radius must be positive, got {radius}")));
        }
        Ok(Body::from_rep(dim, Rep::EuclideanBall { radius }))
    }

    pub fn lp_ball(dim: usize, p: f64, radius: f64) -> Result<Body, GeomError> {
        if dim == 0 {
            return Err(GeomError::InvalidBody("dimension must be positive".into()));
        }
        if !(p >= 1.0) {
            return Err(GeomError::InvalidBody(format!("exponent must satisfy p >= 1, got {p}")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeomError::InvalidBody(format!("radius must be positive, got {radius}")));
        }
        Ok(Body::from_rep(dim, Rep::LpBall { p, radius }))
    }

    pub fn ellipsoid(shape: DMatrix<f64>) -> Result<Body, GeomError> {
        let n = shape.nrows();
        if n == 0 || shape.ncols() != n {
            return Err(GeomError::InvalidBody("shape matrix must be square".into()));
        }
        let sym = (&shape + shape.transpose()) * 0.5;
        let defect = (&sym - &shape).amax();
        if defect > tol::SYMMETRY_TOL * (1.0 + shape.amax()) {
            return Err(GeomError::InvalidBody(format!(
                "shape matrix not symmetric (defect {defect:.2e})"
            )));
        }
        let chol: Cholesky<f64, Dyn> = Cholesky::new(sym.clone())
            .ok_or_else(|| GeomError::InvalidBody("shape matrix not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv_shape = chol.inverse();
        Ok(Body::from_rep(n, Rep::Ellipsoid { shape: sym, inv_shape, log_det }))
    }

    pub fn h_polytope(rows: DMatrix<f64>) -> Result<Body, GeomError> {
        let n = rows.ncols();
        if n == 0 || rows.nrows() == 0 {
            return Err(GeomError::InvalidBody("facet matrix must be nonempty".into()));
        }
        if matrix_rank(&rows) < n {
            return Err(GeomError::InvalidBody(
                "facet normals do not span the space; the slab body is unbounded".into(),
            ));
        }
        Ok(Body::from_rep(n, Rep::HPolytope { rows }))
    }

    pub fn v_polytope(verts: DMatrix<f64>) -> Result<Body, GeomError> {
        let n = verts.ncols();
        if n == 0 || verts.nrows() == 0 {
            return Err(GeomError::InvalidBody("vertex matrix must be nonempty".into()));
        }
        if matrix_rank(&verts) < n {
            return Err(GeomError::InvalidBody(
                "vertices do not span the space; the hull is degenerate".into(),
            ));
        }
        Ok(Body::from_rep(n, Rep::VPolytope { verts }))
    }

    /// `[-1,1]^n` in facet form.
    pub fn cube(dim: usize) -> Body {
        Body::h_polytope(DMatrix::identity(dim, dim)).expect("identity facets")
    }

    /// `conv{±e_i}` in vertex form.
    pub fn cross_polytope(dim: usize) -> Body {
        Body::v_polytope(DMatrix::identity(dim, dim)).expect("identity vertices")
    }

    /// Empirical moment body over a fixed sample matrix (rows = points):
    /// support `u ↦ (mean_i |⟨x_i, u⟩|^q)^{1/q}`.
    pub fn from_moment_samples(samples: Arc<DMatrix<f64>>, q: f64) -> Result<Body, GeomError> {
        let n = samples.ncols();
        if !(q >= 1.0 && q.is_finite()) {
            return Err(GeomError::InvalidBody(format!("moment order must be >= 1, got {q}")));
        }
        if samples.nrows() < 2 || n == 0 {
            return Err(GeomError::InvalidBody("need at least two sample points".into()));
        }
        if matrix_rank(&samples) < n {
            return Err(GeomError::InvalidBody(
                "sample points do not span the space; the moment body is degenerate".into(),
            ));
        }
        Ok(Body::from_rep(n, Rep::SampledCentroid { samples, q }))
    }

    pub fn linear_image(&self, map: DMatrix<f64>) -> Result<Body, GeomError> {
        let n = self.dim;
        if map.nrows() != n || map.ncols() != n {
            return Err(GeomError::DimensionMismatch(format!(
                "map must be {n}x{n}, got {}x{}",
                map.nrows(),
                map.ncols()
            )));
        }
        let lu = map.clone().lu();
        let det = lu.determinant();
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(GeomError::InvalidBody("linear map is singular".into()));
        }
        let inv = lu
            .try_inverse()
            .ok_or_else(|| GeomError::InvalidBody("linear map is singular".into()))?;
        let log_abs_det = det.abs().ln();
        Ok(match &self.rep {
            // T(E_A) = E_{T A Tᵀ}
            Rep::EuclideanBall { radius } => {
                let shape = &map * map.transpose() * (radius * radius);
                Body::ellipsoid(shape)?
            }
            Rep::Ellipsoid { shape, .. } => Body::ellipsoid(&map * shape * map.transpose())?,
            // {x : |⟨a_i, T⁻¹x⟩| ≤ 1} has facet rows A·T⁻¹.
            Rep::HPolytope { rows } => Body::h_polytope(rows * &inv)?,
            // Vertices map forward: rows vᵀ ↦ vᵀTᵀ.
            Rep::VPolytope { verts } => Body::v_polytope(verts * map.transpose())?,
            Rep::LinearImage { inner, map: m0, .. } => {
                let composed = &map * m0;
                inner.as_ref().clone().linear_image(composed)?
            }
            Rep::Scaled { inner, factor } => inner.linear_image(map)?.scaled(*factor)?,
            _ => Body::from_rep(
                n,
                Rep::LinearImage { inner: Arc::new(self.clone()), map, inv, log_abs_det },
            ),
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<Body, GeomError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(GeomError::InvalidParameter(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Ok(match &self.rep {
            Rep::EuclideanBall { radius } => {
                Body::from_rep(self.dim, Rep::EuclideanBall { radius: radius * factor })
            }
            Rep::LpBall { p, radius } => {
                Body::from_rep(self.dim, Rep::LpBall { p: *p, radius: radius * factor })
            }
            Rep::Ellipsoid { shape, .. } => Body::ellipsoid(shape * (factor * factor))?,
            Rep::HPolytope { rows } => Body::from_rep(self.dim, Rep::HPolytope { rows: rows / factor }),
            Rep::VPolytope { verts } => {
                Body::from_rep(self.dim, Rep::VPolytope { verts: verts * factor })
            }
            Rep::Scaled { inner, factor: f0 } => Body::from_rep(
                self.dim,
                Rep::Scaled { inner: inner.clone(), factor: f0 * factor },
            ),
            _ => Body::from_rep(
                self.dim,
                Rep::Scaled { inner: Arc::new(self.clone()), factor },
            ),
        })
    }

    /// Polar body. Involutive: `polar(polar(K))` short-circuits to `K`;
    /// otherwise the result swaps the support and gauge oracles of `K`.
    pub fn polar(&self) -> Body {
        if let Rep::Polar { inner } = &self.rep {
            return inner.as_ref().clone();
        }
        Body::from_rep(self.dim, Rep::Polar { inner: Arc::new(self.clone()) })
    }

    /// Section `K ∩ E` in the coordinates of `E`: the result's gauge at `y`
    /// equals `‖By‖_K`. Structural when exact, oracle-backed otherwise.
    pub fn section(&self, sub: &Subspace) -> Result<Body, GeomError> {
        let n = self.dim;
        if sub.ambient_dim() != n {
            return Err(GeomError::DimensionMismatch(format!(
                "subspace lives in R^{}, body in R^{n}",
                sub.ambient_dim()
            )));
        }
        let k = sub.dim();
        if k == n {
            // Full section is a rotation into the basis coordinates.
            return self.linear_image(sub.basis().transpose());
        }
        Ok(match &self.rep {
            Rep::EuclideanBall { radius } => Body::euclidean_ball(k, *radius)?,
            Rep::Ellipsoid { inv_shape, .. } => {
                let m = sub.basis().tr_mul(&(inv_shape * sub.basis()));
                let chol = Cholesky::new(m.clone()).ok_or_else(|| {
                    GeomError::InvalidBody("section quadratic form not positive definite".into())
                })?;
                Body::ellipsoid(chol.inverse())?
            }
            Rep::HPolytope { rows } => Body::h_polytope(rows * sub.basis())?,
            Rep::LinearImage { inner, inv, .. } => {
                // gauge(y) = ‖T⁻¹By‖_K; factor T⁻¹B = QR and reduce to a
                // section of the operand over span(Q).
                let m = inv * sub.basis();
                let (q, r) = linalg::qr_positive(&m);
                let r_inv = r.clone().try_inverse().ok_or_else(|| {
                    GeomError::InvalidBody("section factor is singular".into())
                })?;
                inner.section(&Subspace::from_orthonormal(q))?.linear_image(r_inv)?
            }
            Rep::Scaled { inner, factor } => inner.section(sub)?.scaled(*factor)?,
            // K° ∩ E = (P_E K)°
            Rep::Polar { inner } => inner.project(sub)?.polar(),
            Rep::Section { inner, sub: s0 } => {
                let basis = s0.basis() * sub.basis();
                inner.section(&Subspace::from_orthonormal(basis))?
            }
            _ => Body::from_rep(k, Rep::Section { inner: Arc::new(self.clone()), sub: sub.clone() }),
        })
    }

    /// Orthogonal projection `P_E K` in the coordinates of `E`: the result's
    /// support at `u` equals `h_K(Bu)`.
    pub fn project(&self, sub: &Subspace) -> Result<Body, GeomError> {
        let n = self.dim;
        if sub.ambient_dim() != n {
            return Err(GeomError::DimensionMismatch(format!(
                "subspace lives in R^{}, body in R^{n}",
                sub.ambient_dim()
            )));
        }
        let k = sub.dim();
        if k == n {
            return self.linear_image(sub.basis().transpose());
        }
        Ok(match &self.rep {
            Rep::EuclideanBall { radius } => Body::euclidean_ball(k, *radius)?,
            Rep::Ellipsoid { shape, .. } => {
                Body::ellipsoid(sub.basis().tr_mul(&(shape * sub.basis())))?
            }
            Rep::VPolytope { verts } => Body::v_polytope(verts * sub.basis())?,
            Rep::LinearImage { inner, map, .. } => {
                // h(y) = h_K(TᵀBy); factor TᵀB = QR and reduce to a
                // projection of the operand onto span(Q).
                let m = map.tr_mul(sub.basis());
                let (q, r) = linalg::qr_positive(&m);
                inner.project(&Subspace::from_orthonormal(q))?.linear_image(r.transpose())?
            }
            Rep::Scaled { inner, factor } => inner.project(sub)?.scaled(*factor)?,
            // P_E(K°) = (K ∩ E)°
            Rep::Polar { inner } => inner.section(sub)?.polar(),
            Rep::Projection { inner, sub: s0 } => {
                let basis = s0.basis() * sub.basis();
                inner.project(&Subspace::from_orthonormal(basis))?
            }
            _ => {
                Body::from_rep(k, Rep::Projection { inner: Arc::new(self.clone()), sub: sub.clone() })
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant_name(&self) -> &'static str {
        match &self.rep {
            Rep::EuclideanBall { .. } => "euclidean_ball",
            Rep::LpBall { .. } => "lp_ball",
            Rep::Ellipsoid { .. } => "ellipsoid",
            Rep::HPolytope { .. } => "h_polytope",
            Rep::VPolytope { .. } => "v_polytope",
            Rep::SampledCentroid { .. } => "sampled_centroid",
            Rep::LinearImage { .. } => "linear_image",
            Rep::Polar { .. } => "polar",
            Rep::Section { .. } => "section",
            Rep::Projection { .. } => "projection",
            Rep::Scaled { .. } => "scaled",
        }
    }

    /// Support function `h_K(u)`. Returns NaN if a backend LP fails.
    pub fn support(&self, u: &DVector<f64>) -> f64 {
        debug_assert_eq!(u.len(), self.dim);
        match &self.rep {
            Rep::EuclideanBall { radius } => radius * u.norm(),
            Rep::LpBall { p, radius } => radius * norm_lp(u, dual_exponent(*p)),
            Rep::Ellipsoid { shape, .. } => (u.dot(&(shape * u))).max(0.0).sqrt(),
            Rep::HPolytope { rows } => lp::support_slab(rows, u).unwrap_or(f64::NAN),
            Rep::VPolytope { verts } => (verts * u).abs().max(),
            Rep::SampledCentroid { samples, q } => moment_support(samples, *q, u).0,
            Rep::LinearImage { inner, map, .. } => inner.support(&map.tr_mul(u)),
            Rep::Polar { inner } => inner.gauge(u),
            Rep::Section { inner, sub } => {
                // h_{K∩E}(u) = min_{z ⊥ E} h_K(Bu + z)
                let x0 = sub.lift(u);
                match &inner.rep {
                    Rep::VPolytope { verts } => {
                        lp::min_max_abs(&(verts * &x0), &(verts * sub.complement()))
                            .unwrap_or(f64::NAN)
                    }
                    _ => program::min_over_affine(|z| inner.support(z), &x0, sub.complement()),
                }
            }
            Rep::Projection { inner, sub } => inner.support(&sub.lift(u)),
            Rep::Scaled { inner, factor } => factor * inner.support(u),
        }
    }

    /// Gauge `‖x‖_K`. Returns NaN if a backend LP fails.
    pub fn gauge(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.rep {
            Rep::EuclideanBall { radius } => x.norm() / radius,
            Rep::LpBall { p, radius } => norm_lp(x, *p) / radius,
            Rep::Ellipsoid { inv_shape, .. } => (x.dot(&(inv_shape * x))).max(0.0).sqrt(),
            Rep::HPolytope { rows } => (rows * x).abs().max(),
            Rep::VPolytope { verts } => lp::gauge_hull(verts, x, None).unwrap_or(f64::NAN),
            Rep::SampledCentroid { samples, q } => {
                let s = samples.clone();
                let qq = *q;
                program::gauge_from_support(move |u| moment_support(&s, qq, u), x)
            }
            Rep::LinearImage { inner, inv, .. } => inner.gauge(&(inv * x)),
            Rep::Polar { inner } => inner.support(x),
            Rep::Section { inner, sub } => inner.gauge(&sub.lift(x)),
            Rep::Projection { inner, sub } => {
                // ‖y‖_{P_E K} = min_{z ⊥ E} ‖By + z‖_K
                let x0 = sub.lift(x);
                match &inner.rep {
                    Rep::HPolytope { rows } => {
                        lp::min_max_abs(&(rows * &x0), &(rows * sub.complement()))
                            .unwrap_or(f64::NAN)
                    }
                    Rep::VPolytope { verts } => {
                        lp::gauge_hull(verts, &x0, Some(sub.complement())).unwrap_or(f64::NAN)
                    }
                    _ => program::min_over_affine(|z| inner.gauge(z), &x0, sub.complement()),
                }
            }
            Rep::Scaled { inner, factor } => inner.gauge(x) / factor,
        }
    }

    /// `x ∈ (1 + tol)·K`.
    pub fn membership(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.gauge(x) <= 1.0 + tol
    }

    /// Chord of the body along `dir` through the interior point `x`:
    /// the interval of `t` with `x + t·dir ∈ K`.
    pub(crate) fn chord(&self, x: &DVector<f64>, dir: &DVector<f64>) -> (f64, f64) {
        match &self.rep {
            Rep::EuclideanBall { radius } => quadratic_chord_ball(x, dir, *radius),
            Rep::Ellipsoid { inv_shape, .. } => quadratic_chord(inv_shape, x, dir),
            Rep::HPolytope { rows } => slab_chord(rows, x, dir),
            Rep::LpBall { p, radius } if p.is_infinite() => box_chord(x, dir, *radius),
            Rep::LinearImage { inner, inv, .. } => inner.chord(&(inv * x), &(inv * dir)),
            Rep::Scaled { inner, factor } => inner.chord(&(x / *factor), &(dir / *factor)),
            _ => bisection_chord(self, x, dir),
        }
    }

    /// Spherical mean of the gauge in closed form (balls and wrappers).
    pub(crate) fn closed_mean_norm(&self) -> Option<f64> {
        match &self.rep {
            Rep::EuclideanBall { radius } => Some(1.0 / radius),
            Rep::Scaled { inner, factor } => inner.closed_mean_norm().map(|m| m / factor),
            Rep::Polar { inner } => inner.closed_mean_width(),
            _ => None,
        }
    }

    /// Spherical mean of the support function in closed form.
    pub(crate) fn closed_mean_width(&self) -> Option<f64> {
        match &self.rep {
            Rep::EuclideanBall { radius } => Some(*radius),
            Rep::Scaled { inner, factor } => inner.closed_mean_width().map(|m| m * factor),
            Rep::Polar { inner } => inner.closed_mean_norm(),
            _ => None,
        }
    }

    /// Volume radius in closed form where the representation admits one.
    pub(crate) fn closed_form_vrad(&self) -> Option<f64> {
        let n = self.dim;
        match &self.rep {
            Rep::EuclideanBall { radius } => Some(*radius),
            Rep::LpBall { p, radius } => {
                let log_ratio = linalg::log_lp_ball_volume(n, *p) - linalg::log_unit_ball_volume(n);
                Some(radius * (log_ratio / n as f64).exp())
            }
            Rep::Ellipsoid { log_det, .. } => Some((log_det / (2.0 * n as f64)).exp()),
            Rep::LinearImage { inner, log_abs_det, .. } => {
                inner.closed_form_vrad().map(|v| v * (log_abs_det / n as f64).exp())
            }
            Rep::Scaled { inner, factor } => inner.closed_form_vrad().map(|v| v * factor),
            Rep::Polar { inner } => inner.structural_polar().and_then(|p| p.closed_form_vrad()),
            _ => None,
        }
    }

    /// Covariance of the uniform law on the body where the representation
    /// admits one in closed form.
    pub(crate) fn closed_uniform_covariance(&self) -> Option<DMatrix<f64>> {
        let n = self.dim;
        match &self.rep {
            Rep::EuclideanBall { radius } => {
                Some(DMatrix::identity(n, n) * (radius * radius / (n as f64 + 2.0)))
            }
            Rep::LpBall { p, radius } => {
                // E x_i² for the unit ball: Γ(3/p)Γ(n/p+1) / (Γ(1/p)Γ((n+2)/p+1)),
                // degenerating to 1/3 for the cube.
                let c = if p.is_infinite() {
                    1.0 / 3.0
                } else {
                    let nf = n as f64;
                    (linalg::lgamma(3.0 / p) + linalg::lgamma(nf / p + 1.0)
                        - linalg::lgamma(1.0 / p)
                        - linalg::lgamma((nf + 2.0) / p + 1.0))
                    .exp()
                };
                Some(DMatrix::identity(n, n) * (radius * radius * c))
            }
            Rep::Ellipsoid { shape, .. } => Some(shape / (n as f64 + 2.0)),
            Rep::LinearImage { inner, map, .. } => inner
                .closed_uniform_covariance()
                .map(|c| map * c * map.transpose()),
            Rep::Scaled { inner, factor } => {
                inner.closed_uniform_covariance().map(|c| c * (factor * factor))
            }
            _ => None,
        }
    }

    /// Exact structural polar where one exists (used by volume-radius
    /// shortcuts; the public `polar` keeps the oracle-swap semantics).
    pub(crate) fn structural_polar(&self) -> Option<Body> {
        match &self.rep {
            Rep::EuclideanBall { radius } => Body::euclidean_ball(self.dim, 1.0 / radius).ok(),
            Rep::LpBall { p, radius } => {
                Body::lp_ball(self.dim, dual_exponent(*p), 1.0 / radius).ok()
            }
            Rep::Ellipsoid { inv_shape, .. } => Body::ellipsoid(inv_shape.clone()).ok(),
            Rep::HPolytope { rows } => Body::v_polytope(rows.clone()).ok(),
            Rep::VPolytope { verts } => Body::h_polytope(verts.clone()).ok(),
            Rep::LinearImage { inner, inv, .. } => inner
                .structural_polar()
                .and_then(|ip| ip.linear_image(inv.transpose()).ok()),
            Rep::Scaled { inner, factor } => {
                inner.structural_polar().and_then(|p| p.scaled(1.0 / factor).ok())
            }
            Rep::Polar { inner } => Some(inner.as_ref().clone()),
            Rep::Section { inner, sub } => {
                inner.structural_polar().and_then(|ip| ip.project(sub).ok())
            }
            Rep::Projection { inner, sub } => {
                inner.structural_polar().and_then(|ip| ip.section(sub).ok())
            }
            Rep::SampledCentroid { .. } => None,
        }
    }

    /// Draw `count` points uniformly from the body when an exact sampler
    /// exists (balls, l_p balls, ellipsoids, and linear images/scalings of
    /// those). Rows of the result are points.
    pub(crate) fn uniform_sample_exact<R: Rng>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Option<DMatrix<f64>> {
        let n = self.dim;
        match &self.rep {
            Rep::EuclideanBall { radius } => {
                let mut out = DMatrix::zeros(count, n);
                for i in 0..count {
                    let x = ball_point(n, *radius, rng);
                    out.row_mut(i).copy_from_slice(x.as_slice());
                }
                Some(out)
            }
            Rep::LpBall { p, radius } => {
                let mut out = DMatrix::zeros(count, n);
                for i in 0..count {
                    let x = lp_ball_point(n, *p, *radius, rng);
                    out.row_mut(i).copy_from_slice(x.as_slice());
                }
                Some(out)
            }
            Rep::Ellipsoid { shape, .. } => {
                // E = L·B_2 with A = LLᵀ.
                let l = Cholesky::new(shape.clone())?.l();
                let mut out = DMatrix::zeros(count, n);
                for i in 0..count {
                    let x = &l * ball_point(n, 1.0, rng);
                    out.row_mut(i).copy_from_slice(x.as_slice());
                }
                Some(out)
            }
            Rep::LinearImage { inner, map, .. } => {
                inner.uniform_sample_exact(count, rng).map(|pts| pts * map.transpose())
            }
            Rep::Scaled { inner, factor } => {
                inner.uniform_sample_exact(count, rng).map(|pts| pts * *factor)
            }
            _ => None,
        }
    }
}

fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let cutoff = sv.max() * tol::RANK_REL * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Support value and gradient of an empirical moment body, overflow-safe.
fn moment_support(samples: &DMatrix<f64>, q: f64, u: &DVector<f64>) -> (f64, DVector<f64>) {
    let r = samples * u;
    let m = r.abs().max();
    let nn = samples.nrows() as f64;
    if m == 0.0 {
        return (0.0, DVector::zeros(u.len()));
    }
    // h = m·(mean s^q)^{1/q}, s = |r|/m; ∇h = Sq^{(1-q)/q}·mean(s^{q-1}·sgn·x_i).
    let mut sq = 0.0f64;
    let mut weights = DVector::zeros(r.len());
    for i in 0..r.len() {
        let s = r[i].abs() / m;
        if s > 0.0 {
            let sq1 = s.powf(q - 1.0);
            sq += sq1 * s;
            weights[i] = sq1 * r[i].signum();
        }
    }
    sq /= nn;
    let h = m * sq.powf(1.0 / q);
    let grad = samples.tr_mul(&weights) * (sq.powf((1.0 - q) / q) / nn);
    (h, grad)
}

fn quadratic_chord_ball(x: &DVector<f64>, d: &DVector<f64>, radius: f64) -> (f64, f64) {
    // |x + t d|² = r²
    let a = d.dot(d);
    let b = x.dot(d);
    let c = x.dot(x) - radius * radius;
    solve_chord_quadratic(a, b, c)
}

fn quadratic_chord(m: &DMatrix<f64>, x: &DVector<f64>, d: &DVector<f64>) -> (f64, f64) {
    let md = m * d;
    let a = d.dot(&md);
    let b = x.dot(&md);
    let c = x.dot(&(m * x)) - 1.0;
    solve_chord_quadratic(a, b, c)
}

fn solve_chord_quadratic(a: f64, b: f64, c: f64) -> (f64, f64) {
    // a t² + 2 b t + c = 0 with a > 0, c < 0 (interior point).
    let disc = (b * b - a * c).max(0.0).sqrt();
    ((-b - disc) / a, (-b + disc) / a)
}

fn slab_chord(rows: &DMatrix<f64>, x: &DVector<f64>, d: &DVector<f64>) -> (f64, f64) {
    let cx = rows * x;
    let cd = rows * d;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..cx.len() {
        if cd[i].abs() < 1e-15 {
            continue;
        }
        let t1 = (-1.0 - cx[i]) / cd[i];
        let t2 = (1.0 - cx[i]) / cd[i];
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    (lo, hi)
}

fn box_chord(x: &DVector<f64>, d: &DVector<f64>, radius: f64) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..x.len() {
        if d[i].abs() < 1e-15 {
            continue;
        }
        let t1 = (-radius - x[i]) / d[i];
        let t2 = (radius - x[i]) / d[i];
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    (lo, hi)
}

fn bisection_chord(body: &Body, x: &DVector<f64>, d: &DVector<f64>) -> (f64, f64) {
    let gd = body.gauge(d);
    let gx = body.gauge(x);
    if !(gd > 0.0 && gd.is_finite() && gx.is_finite()) {
        return (f64::NAN, f64::NAN);
    }
    // gauge(x + t d) ≥ |t|·gauge(±d) − gauge(x), so the chord is bracketed.
    let reach = (1.0 + gx) / gd;
    let solve = |sign: f64| -> f64 {
        let mut lo = 0.0f64;
        let mut hi = reach;
        for _ in 0..70 {
            let mid = 0.5 * (lo + hi);
            let g = body.gauge(&(x + d * (sign * mid)));
            if g <= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        sign * 0.5 * (lo + hi)
    };
    (solve(-1.0), solve(1.0))
}

fn ball_point<R: Rng>(n: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let mut g: DVector<f64> = DVector::zeros(n);
        for i in 0..n {
            g[i] = StandardNormal.sample(rng);
        }
        let norm = g.norm();
        if norm > 1e-12 {
            let u: f64 = rng.random();
            return g * (radius * u.powf(1.0 / n as f64) / norm);
        }
    }
}

/// Exact uniform point in r·B_p^n: for finite p draw coordinates with
/// density ∝ exp(-|t|^p) plus an independent Exp(1) slack, then normalize;
/// p = ∞ is a product of uniforms.
fn lp_ball_point<R: Rng>(n: usize, p: f64, radius: f64, rng: &mut R) -> DVector<f64> {
    if p.is_infinite() {
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[i] = radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        return x;
    }
    let gamma = Gamma::new(1.0 / p, 1.0).expect("valid shape");
    loop {
        let mut x = DVector::zeros(n);
        let mut sum_p = 0.0;
        for i in 0..n {
            let g: f64 = gamma.sample(rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            x[i] = sign * g.powf(1.0 / p);
            sum_p += g;
        }
        let w: f64 = Exp1.sample(rng);
        let denom = (sum_p + w).powf(1.0 / p);
        if denom > 1e-12 {
            return x * (radius / denom);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn lp_ball_oracles_are_dual_norms() {
        let b1 = Body::lp_ball(3, 1.0, 1.0).unwrap();
        let x = v(&[0.5, -0.25, 0.125]);
        assert_relative_eq!(b1.gauge(&x), 0.875, max_relative = 1e-14);
        assert_relative_eq!(b1.support(&x), 0.5, max_relative = 1e-14);
        let binf = Body::lp_ball(3, f64::INFINITY, 2.0).unwrap();
        assert_relative_eq!(binf.gauge(&x), 0.25, max_relative = 1e-14);
        assert_relative_eq!(binf.support(&x), 1.75, max_relative = 1e-14);
    }

    #[test]
    fn polytope_oracles_match_closed_forms() {
        let cube = Body::cube(3);
        let cross = Body::cross_polytope(3);
        let x = v(&[0.3, -0.9, 0.4]);
        assert_relative_eq!(cube.gauge(&x), 0.9, max_relative = 1e-12);
        assert_relative_eq!(cube.support(&x), 1.6, max_relative = 1e-9);
        assert_relative_eq!(cross.gauge(&x), 1.6, max_relative = 1e-9);
        assert_relative_eq!(cross.support(&x), 0.9, max_relative = 1e-12);
    }

    #[test]
    fn polar_swaps_oracles_and_is_involutive() {
        let cube = Body::cube(4);
        let polar = cube.polar();
        let u = v(&[0.2, -0.7, 0.1, 0.4]);
        assert_eq!(polar.support(&u), cube.gauge(&u));
        assert_eq!(polar.gauge(&u), cube.support(&u));
        let back = polar.polar();
        assert_eq!(back.variant_name(), "h_polytope");
        assert_eq!(back.support(&u), cube.support(&u));
    }

    #[test]
    fn ellipsoid_polar_matches_inverse_shape() {
        let shape = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let e = Body::ellipsoid(shape.clone()).unwrap();
        let ep = e.polar();
        let direct = Body::ellipsoid(shape.try_inverse().unwrap()).unwrap();
        for u in [v(&[1.0, 0.0]), v(&[0.3, -0.8]), v(&[-1.2, 0.5])] {
            assert_relative_eq!(ep.support(&u), direct.support(&u), max_relative = 1e-9);
            assert_relative_eq!(ep.gauge(&u), direct.gauge(&u), max_relative = 1e-9);
        }
    }

    #[test]
    fn ellipsoid_section_and_projection_are_structural() {
        let shape = DMatrix::from_diagonal(&v(&[16.0, 1.0, 1.0, 1.0]));
        let e = Body::ellipsoid(shape).unwrap();
        let sub = Subspace::from_axes(4, &[0, 2]).unwrap();
        let sec = e.section(&sub).unwrap();
        let proj = e.project(&sub).unwrap();
        assert_eq!(sec.variant_name(), "ellipsoid");
        assert_eq!(proj.variant_name(), "ellipsoid");
        // Both restrict to diag(16, 1) on an axis-aligned plane.
        let y = v(&[0.25, 0.5]);
        let expect = (16.0f64 * 0.25 * 0.25 + 0.25).sqrt();
        assert_relative_eq!(sec.support(&y), expect, max_relative = 1e-12);
        assert_relative_eq!(proj.support(&y), expect, max_relative = 1e-12);
    }

    #[test]
    fn generic_section_support_matches_ball() {
        // l_2 ball carried as an LpBall exercises the oracle-backed section:
        // any section of B_2 is again B_2.
        let b = Body::lp_ball(4, 2.0, 1.0).unwrap();
        let basis = DMatrix::from_column_slice(
            4,
            2,
            &[0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5],
        );
        let sub = Subspace::new(basis).unwrap();
        let sec = b.section(&sub).unwrap();
        assert_eq!(sec.variant_name(), "section");
        let u = v(&[0.6, -0.8]);
        assert_relative_eq!(sec.support(&u), 1.0, max_relative = 1e-7);
        assert_relative_eq!(sec.gauge(&u), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn generic_projection_gauge_matches_ball() {
        let b = Body::lp_ball(4, 2.0, 1.0).unwrap();
        let basis = DMatrix::from_column_slice(
            4,
            2,
            &[0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5],
        );
        let sub = Subspace::new(basis).unwrap();
        let proj = b.project(&sub).unwrap();
        assert_eq!(proj.variant_name(), "projection");
        let u = v(&[0.6, -0.8]);
        assert_relative_eq!(proj.gauge(&u), 1.0, max_relative = 1e-7);
        assert_relative_eq!(proj.support(&u), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn cube_projection_routes_through_lp() {
        let cube = Body::cube(3);
        let sub = Subspace::from_axes(3, &[0, 1]).unwrap();
        let proj = cube.project(&sub).unwrap();
        let y = v(&[1.0, 1.0]);
        assert_relative_eq!(proj.gauge(&y), 1.0, max_relative = 1e-9);
        let sec = cube.section(&sub).unwrap();
        assert_eq!(sec.variant_name(), "h_polytope");
        assert_relative_eq!(sec.gauge(&y), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn section_projection_duality_for_vertex_polytope() {
        // gauge(section(K°, E), y) = support(project(K, E), y)
        let k = Body::v_polytope(DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.2, 0.0, -0.3, 1.0, 0.1, 0.0, -0.4, 1.0, 0.5, 0.5, 0.5],
        ))
        .unwrap();
        let sub = Subspace::from_axes(3, &[0, 2]).unwrap();
        let lhs_body = k.polar().section(&sub).unwrap();
        let rhs_body = k.project(&sub).unwrap();
        for y in [v(&[0.4, 0.9]), v(&[-1.0, 0.3])] {
            assert_relative_eq!(lhs_body.gauge(&y), rhs_body.support(&y), max_relative = 1e-9);
        }
    }

    #[test]
    fn linear_image_of_polytopes_is_structural() {
        let cube = Body::cube(2);
        let t = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let img = cube.linear_image(t.clone()).unwrap();
        assert_eq!(img.variant_name(), "h_polytope");
        // image of vertex (1,1) is (3,1)
        let x = v(&[3.0, 1.0]);
        assert_relative_eq!(img.gauge(&x), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn moment_body_support_is_even_in_samples() {
        let samples = Arc::new(DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 2.0, 0.0, -2.0]));
        let z = Body::from_moment_samples(samples, 4.0).unwrap();
        // mean |⟨x, e1⟩|^4 = (1+1+0+0)/4 = 0.5
        assert_relative_eq!(z.support(&v(&[1.0, 0.0])), 0.5f64.powf(0.25), max_relative = 1e-12);
        assert_relative_eq!(z.support(&v(&[0.0, 1.0])), 8.0f64.powf(0.25), max_relative = 1e-12);
    }

    #[test]
    fn chord_matches_gauge_boundary() {
        let bodies = [Body::cube(3), Body::lp_ball(3, 3.0, 1.0).unwrap(), Body::cross_polytope(3)];
        let x = v(&[0.1, 0.2, -0.1]);
        let d = v(&[0.5, -0.3, 0.8]);
        for b in &bodies {
            let (lo, hi) = b.chord(&x, &d);
            assert!(lo < 0.0 && hi > 0.0);
            for t in [lo, hi] {
                let g = b.gauge(&(&x + &d * t));
                assert_relative_eq!(g, 1.0, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn subspace_complement_is_orthonormal() {
        let basis = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let sub = Subspace::new(basis).unwrap();
        let c = sub.complement();
        assert_eq!(c.ncols(), 2);
        let gram = c.tr_mul(c);
        assert_relative_eq!(gram[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(gram[(1, 1)], 1.0, epsilon = 1e-12);
        assert!(gram[(0, 1)].abs() < 1e-12);
        assert!((sub.basis().tr_mul(c)).amax() < 1e-12);
    }

    #[test]
    fn degenerate_polytopes_are_rejected() {
        assert!(Body::h_polytope(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).is_err());
        assert!(Body::v_polytope(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0])).is_err());
    }
}
