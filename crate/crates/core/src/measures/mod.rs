//! Even log-concave probability measures: exact samplers for the
//! closed-form variants, hit-and-run for uniform laws on bodies, marginals,
//! isotropic normalization, and isotropic constants.
//!
//! Every variant here is even (symmetric under x ↦ −x): the base laws are
//! even and linear images and marginals of even measures stay even. The
//! normalization and moment code exploits this — barycenters are zero by
//! symmetry and are never estimated.

pub mod centroid;
pub mod schema;

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::bodies::{Body, Subspace};
use crate::error::GeomError;
use crate::functionals::{EstimateCI, Method};
use crate::linalg;
use crate::sampling::{self, RngStream};
use crate::tol;

pub use centroid::{
    centroid_body, centroid_body_support, psi_alpha_constant, q_cap, PsiAlphaEstimate,
};
pub use schema::MeasureSpec;

/// One-dimensional even log-concave law, a product-measure component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Law1D {
    Gaussian { sigma: f64 },
    /// Density `(λ/2)·e^{−λ|t|}`.
    SymmetricExponential { lambda: f64 },
    /// Uniform on `[−a, a]`.
    Uniform { half_width: f64 },
}

impl Law1D {
    fn validate(&self) -> Result<(), GeomError> {
        let ok = match self {
            Law1D::Gaussian { sigma } => sigma.is_finite() && *sigma > 0.0,
            Law1D::SymmetricExponential { lambda } => lambda.is_finite() && *lambda > 0.0,
            Law1D::Uniform { half_width } => half_width.is_finite() && *half_width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(GeomError::InvalidMeasure(format!("law parameter must be positive: {self:?}")))
        }
    }

    pub fn density_sup(&self) -> f64 {
        match self {
            Law1D::Gaussian { sigma } => 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt()),
            Law1D::SymmetricExponential { lambda } => lambda / 2.0,
            Law1D::Uniform { half_width } => 1.0 / (2.0 * half_width),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Law1D::Gaussian { sigma } => sigma * sigma,
            Law1D::SymmetricExponential { lambda } => 2.0 / (lambda * lambda),
            Law1D::Uniform { half_width } => half_width * half_width / 3.0,
        }
    }

    /// `E|x|^q` for `q ≥ 1`, exact.
    pub fn abs_moment(&self, q: f64) -> f64 {
        match self {
            // E|g|^q = 2^{q/2}·Γ((q+1)/2)/√π, scaled by σ^q.
            Law1D::Gaussian { sigma } => (q * sigma.ln()
                + 0.5 * q * std::f64::consts::LN_2
                + linalg::lgamma((q + 1.0) / 2.0)
                - 0.5 * std::f64::consts::PI.ln())
            .exp(),
            Law1D::SymmetricExponential { lambda } => {
                (linalg::lgamma(q + 1.0) - q * lambda.ln()).exp()
            }
            Law1D::Uniform { half_width } => half_width.powf(q) / (q + 1.0),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Law1D::Gaussian { sigma } => {
                let g: f64 = StandardNormal.sample(rng);
                sigma * g
            }
            Law1D::SymmetricExponential { lambda } => {
                let e: f64 = Exp1.sample(rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * e / lambda
            }
            Law1D::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

#[derive(Clone, Debug)]
enum MeasureRep {
    StandardGaussian,
    UniformOnBody(Arc<Body>),
    ProductLaw(Vec<Law1D>),
    LinearImage {
        inner: Arc<LogConcaveMeasure>,
        map: DMatrix<f64>,
        log_abs_det: f64,
    },
    Marginal {
        inner: Arc<LogConcaveMeasure>,
        sub: Subspace,
    },
}

/// How the affine normalization was reached: the composed linear map, the
/// number of estimate/whiten rounds, and the final covariance residual
/// `max(|off-diag|, |diag − 1|)`.
#[derive(Clone, Debug)]
pub struct TransformReport {
    pub map: DMatrix<f64>,
    pub rounds: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct LogConcaveMeasure {
    dim: usize,
    rep: MeasureRep,
}

impl LogConcaveMeasure {
    pub fn standard_gaussian(dim: usize) -> Result<Self, GeomError> {
        if dim == 0 {
            return Err(GeomError::InvalidMeasure("dimension must be >= 1".into()));
        }
        Ok(LogConcaveMeasure { dim, rep: MeasureRep::StandardGaussian })
    }

    pub fn uniform_on_body(body: Body) -> Self {
        LogConcaveMeasure { dim: body.dim(), rep: MeasureRep::UniformOnBody(Arc::new(body)) }
    }

    pub fn product_law(laws: Vec<Law1D>) -> Result<Self, GeomError> {
        if laws.is_empty() {
            return Err(GeomError::InvalidMeasure("product law needs >= 1 component".into()));
        }
        for law in &laws {
            law.validate()?;
        }
        Ok(LogConcaveMeasure { dim: laws.len(), rep: MeasureRep::ProductLaw(laws) })
    }

    /// Push-forward under an invertible matrix.
    pub fn linear_image(&self, map: DMatrix<f64>) -> Result<Self, GeomError> {
        let n = self.dim;
        if map.nrows() != n || map.ncols() != n {
            return Err(GeomError::DimensionMismatch(format!(
                "map must be {n}x{n}, got {}x{}",
                map.nrows(),
                map.ncols()
            )));
        }
        let det = map.clone().lu().determinant();
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(GeomError::InvalidMeasure("linear map is singular".into()));
        }
        Ok(LogConcaveMeasure {
            dim: n,
            rep: MeasureRep::LinearImage {
                inner: Arc::new(self.clone()),
                map,
                log_abs_det: det.abs().ln(),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant_name(&self) -> &'static str {
        match &self.rep {
            MeasureRep::StandardGaussian => "standard_gaussian",
            MeasureRep::UniformOnBody(_) => "uniform_on_body",
            MeasureRep::ProductLaw(_) => "product_law",
            MeasureRep::LinearImage { .. } => "linear_image",
            MeasureRep::Marginal { .. } => "marginal",
        }
    }

    /// `sup f_μ` where the density is known in closed form. `None` for
    /// marginals without a shortcut and for bodies without a closed volume.
    pub fn density_sup(&self) -> Option<f64> {
        match &self.rep {
            MeasureRep::StandardGaussian => {
                Some((-0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln()).exp())
            }
            MeasureRep::UniformOnBody(body) => {
                // 1/|K| with |K| = vrad^n·|B_2^n|.
                let vrad = body.closed_form_vrad()?;
                let n = self.dim as f64;
                Some((-(n * vrad.ln() + linalg::log_unit_ball_volume(self.dim))).exp())
            }
            MeasureRep::ProductLaw(laws) => {
                Some(laws.iter().map(Law1D::density_sup).product())
            }
            MeasureRep::LinearImage { inner, log_abs_det, .. } => {
                inner.density_sup().map(|s| s * (-log_abs_det).exp())
            }
            MeasureRep::Marginal { .. } => None,
        }
    }

    /// Covariance matrix where the representation admits one exactly.
    pub(crate) fn closed_covariance(&self) -> Option<DMatrix<f64>> {
        match &self.rep {
            MeasureRep::StandardGaussian => Some(DMatrix::identity(self.dim, self.dim)),
            MeasureRep::UniformOnBody(body) => body.closed_uniform_covariance(),
            MeasureRep::ProductLaw(laws) => Some(DMatrix::from_diagonal(
                &DVector::from_iterator(laws.len(), laws.iter().map(Law1D::variance)),
            )),
            MeasureRep::LinearImage { inner, map, .. } => {
                inner.closed_covariance().map(|c| map * c * map.transpose())
            }
            MeasureRep::Marginal { inner, sub } => inner
                .closed_covariance()
                .map(|c| sub.basis().tr_mul(&(c * sub.basis()))),
        }
    }

    /// Push-forward under orthogonal projection onto `sub`, in the
    /// subspace's coordinates. Gaussians and coordinate marginals of product
    /// laws stay closed-form; everything else wraps.
    pub fn marginal(&self, sub: &Subspace) -> Result<Self, GeomError> {
        if sub.ambient_dim() != self.dim {
            return Err(GeomError::DimensionMismatch(format!(
                "subspace lives in dimension {}, measure in {}",
                sub.ambient_dim(),
                self.dim
            )));
        }
        if let MeasureRep::StandardGaussian = &self.rep {
            return LogConcaveMeasure::standard_gaussian(sub.dim());
        }
        if let MeasureRep::ProductLaw(laws) = &self.rep {
            if let Some(axes) = coordinate_axes(sub.basis()) {
                return LogConcaveMeasure::product_law(
                    axes.iter().map(|&i| laws[i]).collect(),
                );
            }
        }
        Ok(LogConcaveMeasure {
            dim: sub.dim(),
            rep: MeasureRep::Marginal { inner: Arc::new(self.clone()), sub: sub.clone() },
        })
    }

    /// Draw `n_samples` points; rows of the result are points. Closed-form
    /// variants sample exactly; uniform laws on bodies without an exact
    /// sampler run hit-and-run chains (warm start at the center, burn-in
    /// `10n²`, one point kept per `n²` steps). Chains are derived per block,
    /// so output is identical for any worker count.
    pub fn sample(&self, n_samples: usize, stream: RngStream) -> Result<DMatrix<f64>, GeomError> {
        if n_samples == 0 {
            return Err(GeomError::InvalidParameter("need n_samples >= 1".into()));
        }
        match &self.rep {
            MeasureRep::LinearImage { inner, map, .. } => {
                Ok(inner.sample(n_samples, stream)? * map.transpose())
            }
            MeasureRep::Marginal { inner, sub } => {
                Ok(inner.sample(n_samples, stream)? * sub.basis())
            }
            _ => {
                let block = 1024usize;
                let blocks: Vec<Result<DMatrix<f64>, GeomError>> = (0..n_samples.div_ceil(block))
                    .into_par_iter()
                    .map(|b| {
                        let count = block.min(n_samples - b * block);
                        let mut rng = stream.derive_indexed("chain", b as u64).rng();
                        self.sample_block(count, &mut rng)
                    })
                    .collect();
                let mut out = DMatrix::zeros(n_samples, self.dim);
                let mut row = 0usize;
                for part in blocks {
                    let pts = part?;
                    out.rows_mut(row, pts.nrows()).copy_from(&pts);
                    row += pts.nrows();
                }
                Ok(out)
            }
        }
    }

    /// One block of direct draws or one hit-and-run chain.
    fn sample_block(&self, count: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>, GeomError> {
        let n = self.dim;
        let mut out = DMatrix::zeros(count, n);
        match &self.rep {
            MeasureRep::StandardGaussian => {
                for i in 0..count {
                    for j in 0..n {
                        out[(i, j)] = StandardNormal.sample(rng);
                    }
                }
            }
            MeasureRep::ProductLaw(laws) => {
                for i in 0..count {
                    for (j, law) in laws.iter().enumerate() {
                        out[(i, j)] = law.sample(rng);
                    }
                }
            }
            MeasureRep::UniformOnBody(body) => {
                if let Some(pts) = body.uniform_sample_exact(count, rng) {
                    return Ok(pts);
                }
                let burn_in = tol::BURN_IN_FACTOR * n * n;
                let thin = (tol::THINNING_FACTOR * n * n).max(1);
                let mut x: DVector<f64> = DVector::zeros(n);
                for step in 0..burn_in + count * thin {
                    let dir = sampling::sample_sphere(n, rng)?;
                    let (lo, hi) = body.chord(&x, &dir);
                    if !(lo.is_finite() && hi.is_finite() && lo <= 0.0 && hi >= 0.0 && hi - lo > 0.0)
                    {
                        return Err(GeomError::ChainStall(format!(
                            "chord through {:?} along {:?} came back as [{lo}, {hi}]",
                            x.as_slice(),
                            dir.as_slice()
                        )));
                    }
                    let t = lo + (hi - lo) * rng.random::<f64>();
                    x.axpy(t, &dir, 1.0);
                    if step >= burn_in && (step - burn_in + 1) % thin == 0 {
                        out.row_mut((step - burn_in + 1) / thin - 1).copy_from_slice(x.as_slice());
                    }
                }
            }
            MeasureRep::LinearImage { .. } | MeasureRep::Marginal { .. } => {
                unreachable!("wrapper variants sample through their inner measure")
            }
        }
        Ok(out)
    }

    /// Iteratively estimate the covariance from fresh samples and whiten
    /// until its distance to the identity drops below `tol` (evenness makes
    /// centering a no-op). Returns the normalized measure and the composed
    /// map.
    pub fn isotropic_normalize(
        &self,
        n_samples: usize,
        tol: f64,
        stream: RngStream,
    ) -> Result<(LogConcaveMeasure, TransformReport), GeomError> {
        if !(tol > 0.0 && tol <= 0.1) {
            return Err(GeomError::InvalidParameter(format!(
                "normalization tolerance must lie in (0, 0.1], got {tol}"
            )));
        }
        if n_samples < 2 {
            return Err(GeomError::InvalidParameter("need n_samples >= 2".into()));
        }
        let n = self.dim;
        let mut current = self.clone();
        let mut map = DMatrix::<f64>::identity(n, n);
        let mut residual = f64::INFINITY;
        for round in 0..tol::ISO_MAX_ROUNDS {
            let pts = current.sample(n_samples, stream.derive_indexed("normalize", round as u64))?;
            let cov = pts.tr_mul(&pts) / n_samples as f64;
            residual = (&cov - DMatrix::<f64>::identity(n, n)).amax();
            if residual < tol {
                return Ok((current, TransformReport { map, rounds: round + 1, residual }));
            }
            let chol = Cholesky::new(cov).ok_or_else(|| {
                GeomError::NonFinite("sample covariance lost positive definiteness".into())
            })?;
            // C = LLᵀ, so W = L⁻¹ satisfies W·C·Wᵀ = I.
            let white = chol
                .l()
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .ok_or_else(|| GeomError::NonFinite("covariance factor not invertible".into()))?;
            current = current.linear_image(white.clone())?;
            map = white * map;
        }
        Err(GeomError::ToleranceUnreached(format!(
            "covariance residual {residual:.3e} after {} normalization rounds (tol {tol})",
            tol::ISO_MAX_ROUNDS
        )))
    }

    /// `L_μ = (sup f_μ)^{1/n}·det(Cov μ)^{1/2n}`, exact when both factors
    /// are closed-form, otherwise with a sampled covariance and a
    /// batch-means standard error.
    pub fn isotropic_constant(
        &self,
        n_samples: usize,
        stream: RngStream,
    ) -> Result<EstimateCI, GeomError> {
        let n = self.dim as f64;
        let sup_f = self.density_sup().ok_or_else(|| {
            GeomError::Unsupported(format!(
                "isotropic constant needs a closed-form density maximum; variant \"{}\" has none",
                self.variant_name()
            ))
        })?;
        let log_sup = sup_f.ln() / n;
        if let Some(cov) = self.closed_covariance() {
            let value = (log_sup + log_det_pd(&cov)? / (2.0 * n)).exp();
            return Ok(EstimateCI::closed(value, stream.seed()));
        }
        let blocks = 8usize;
        let need = blocks * 2 * self.dim.max(8);
        if n_samples < need {
            return Err(GeomError::InvalidParameter(format!(
                "need n_samples >= {need} for a batch-means error in dimension {}",
                self.dim
            )));
        }
        let pts = self.sample(n_samples, stream.derive("covariance"))?;
        let cov = pts.tr_mul(&pts) / n_samples as f64;
        let value = (log_sup + log_det_pd(&cov)? / (2.0 * n)).exp();
        let per = n_samples / blocks;
        let mut vals = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let part = pts.rows(b * per, per);
            let c = part.tr_mul(&part) / per as f64;
            vals.push((log_sup + log_det_pd(&c)? / (2.0 * n)).exp());
        }
        let mean = vals.iter().sum::<f64>() / blocks as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (blocks - 1) as f64;
        let std_err = (var / blocks as f64).sqrt();
        Ok(EstimateCI::sampled(value, std_err, n_samples as u64, stream.seed(), Method::MonteCarlo))
    }

    pub(crate) fn is_standard_gaussian(&self) -> bool {
        matches!(self.rep, MeasureRep::StandardGaussian)
    }

    pub(crate) fn product_laws(&self) -> Option<&[Law1D]> {
        match &self.rep {
            MeasureRep::ProductLaw(laws) => Some(laws),
            _ => None,
        }
    }

    pub(crate) fn linear_parts(&self) -> Option<(&LogConcaveMeasure, &DMatrix<f64>)> {
        match &self.rep {
            MeasureRep::LinearImage { inner, map, .. } => Some((inner, map)),
            _ => None,
        }
    }

    pub(crate) fn marginal_parts(&self) -> Option<(&LogConcaveMeasure, &Subspace)> {
        match &self.rep {
            MeasureRep::Marginal { inner, sub } => Some((inner, sub)),
            _ => None,
        }
    }
}

fn log_det_pd(m: &DMatrix<f64>) -> Result<f64, GeomError> {
    let chol = Cholesky::new(m.clone()).ok_or_else(|| {
        GeomError::NonFinite("covariance lost positive definiteness".into())
    })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// If every basis column is `±e_i` for distinct axes `i`, the axis indices.
fn coordinate_axes(basis: &DMatrix<f64>) -> Option<Vec<usize>> {
    let mut axes = Vec::with_capacity(basis.ncols());
    for j in 0..basis.ncols() {
        let col = basis.column(j);
        let mut hit = None;
        for i in 0..basis.nrows() {
            let v = col[i];
            if v.abs() > 1e-14 {
                if hit.is_some() || (v.abs() - 1.0).abs() > 1e-12 {
                    return None;
                }
                hit = Some(i);
            }
        }
        let i = hit?;
        if axes.contains(&i) {
            return None;
        }
        axes.push(i);
    }
    Some(axes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(label: u64) -> RngStream {
        RngStream::new(20_240_817, label)
    }

    #[test]
    fn gaussian_samples_have_defining_moments() {
        let mu = LogConcaveMeasure::standard_gaussian(8).unwrap();
        let big = 100_000usize;
        let pts = mu.sample(big, stream(1)).unwrap();
        let nf = big as f64;
        // Means are 0 ± 3σ with σ = 1/√N; covariance entries likewise.
        let tol3 = 3.0 / nf.sqrt();
        for j in 0..8 {
            assert!(pts.column(j).sum().abs() / nf < tol3, "mean of coordinate {j}");
        }
        let cov = pts.tr_mul(&pts) / nf;
        // Var of a covariance entry is (1 + δ_ij)/N.
        assert!((&cov - DMatrix::<f64>::identity(8, 8)).amax() < 3.0 * (2.0 / nf).sqrt());
    }

    #[test]
    fn sampling_is_block_deterministic_and_even() {
        let mu = LogConcaveMeasure::product_law(vec![
            Law1D::Gaussian { sigma: 1.0 },
            Law1D::SymmetricExponential { lambda: 2.0 },
            Law1D::Uniform { half_width: 0.5 },
        ])
        .unwrap();
        let a = mu.sample(3000, stream(2)).unwrap();
        let b = mu.sample(3000, stream(2)).unwrap();
        assert_eq!(a, b);
        // Evenness: ⟨x,θ⟩ has vanishing odd moments.
        let theta = DVector::from_row_slice(&[0.6, -0.64, 0.48]);
        let proj = &a * &theta;
        let m1 = proj.sum() / 3000.0;
        let m3 = proj.iter().map(|t| t * t * t).sum::<f64>() / 3000.0;
        let s1 = (proj.iter().map(|t| t * t).sum::<f64>() / 3000.0 / 3000.0).sqrt();
        let s3 = (proj.iter().map(|t| t.powi(6)).sum::<f64>() / 3000.0 / 3000.0).sqrt();
        assert!(m1.abs() < 3.0 * s1, "odd first moment {m1}");
        assert!(m3.abs() < 3.0 * s3, "odd third moment {m3}");
    }

    #[test]
    fn hit_and_run_matches_cube_moments() {
        // [−1/2,1/2]³ as a facet polytope, which has no exact sampler.
        let body = Body::h_polytope(DMatrix::<f64>::identity(3, 3) * 2.0).unwrap();
        let mu = LogConcaveMeasure::uniform_on_body(body);
        let draws = 20_000usize;
        let pts = mu.sample(draws, stream(3)).unwrap();
        for j in 0..3 {
            let var = pts.column(j).iter().map(|t| t * t).sum::<f64>() / draws as f64;
            // Nominal 3σ for iid draws is ±0.0019; allow double for chain
            // autocorrelation.
            assert!((var - 1.0 / 12.0).abs() < 0.004, "coordinate {j} variance {var}");
            assert!(pts.column(j).amax() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn gaussian_marginal_stays_gaussian_and_product_marginal_projects() {
        let gauss = LogConcaveMeasure::standard_gaussian(6).unwrap();
        let sub = sampling::sample_grassmannian(6, 2, &mut stream(4).rng()).unwrap();
        let marg = gauss.marginal(&sub).unwrap();
        assert_eq!(marg.variant_name(), "standard_gaussian");
        assert_eq!(marg.dim(), 2);

        let cube = LogConcaveMeasure::product_law(vec![Law1D::Uniform { half_width: 0.5 }; 3])
            .unwrap();
        let e1 = Subspace::from_axes(3, &[1]).unwrap();
        let m = cube.marginal(&e1).unwrap();
        assert_eq!(m.variant_name(), "product_law");
        assert!((m.closed_covariance().unwrap()[(0, 0)] - 1.0 / 12.0).abs() < 1e-15);

        // A skew subspace has no closed-form shortcut.
        let skew = Subspace::new(
            DMatrix::from_column_slice(3, 1, &[std::f64::consts::FRAC_1_SQRT_2, 0.0, std::f64::consts::FRAC_1_SQRT_2]),
        )
        .unwrap();
        let mm = cube.marginal(&skew).unwrap();
        assert_eq!(mm.variant_name(), "marginal");
        // Its covariance is still exact: Bᵀ·(I/12)·B = 1/12.
        assert!((mm.closed_covariance().unwrap()[(0, 0)] - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_whitens_a_stretched_gaussian() {
        let gauss = LogConcaveMeasure::standard_gaussian(2).unwrap();
        let stretched = gauss
            .linear_image(DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 1.0])))
            .unwrap();
        let (iso, report) = stretched.isotropic_normalize(40_000, 0.05, stream(5)).unwrap();
        assert!(report.residual < 0.05);
        // The composed map undoes the stretch up to an orthogonal factor:
        // TᵀT ≈ diag(1/4, 1).
        let tt = report.map.tr_mul(&report.map);
        assert!((tt[(0, 0)] - 0.25).abs() < 0.05, "TᵀT = {tt}");
        assert!((tt[(1, 1)] - 1.0).abs() < 0.1, "TᵀT = {tt}");
        assert!(tt[(0, 1)].abs() < 0.05);
        let cov = iso.closed_covariance().unwrap();
        assert!((&cov - DMatrix::<f64>::identity(2, 2)).amax() < 0.05);

        // Already-isotropic input converges in one round with the identity.
        let (_, r) = gauss.isotropic_normalize(40_000, 0.05, stream(6)).unwrap();
        assert_eq!(r.rounds, 1);
        assert_eq!(r.map, DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn isotropic_constants_match_the_closed_plugins() {
        // Uniform on [−1/2,1/2]^n: sup f = 1, det Cov = 12^{−n}.
        let cube = LogConcaveMeasure::uniform_on_body(
            Body::lp_ball(5, f64::INFINITY, 0.5).unwrap(),
        );
        let l = cube.isotropic_constant(10, stream(7)).unwrap();
        assert_eq!(l.method, Method::ClosedForm);
        assert!((l.value - 12f64.powf(-0.5)).abs() < 1e-12);

        let gauss = LogConcaveMeasure::standard_gaussian(7).unwrap();
        let l = gauss.isotropic_constant(10, stream(8)).unwrap();
        assert!((l.value - (2.0 * std::f64::consts::PI).powf(-0.5)).abs() < 1e-12);

        // Affine invariance, exactly, since the image keeps closed forms.
        let skew = DMatrix::from_row_slice(7, 7, &{
            let mut m = vec![0.0; 49];
            for i in 0..7 {
                m[i * 7 + i] = 1.0 + i as f64;
                if i + 1 < 7 {
                    m[i * 7 + i + 1] = 0.5;
                }
            }
            m
        });
        let l2 = gauss.linear_image(skew).unwrap().isotropic_constant(10, stream(9)).unwrap();
        assert!((l2.value - l.value).abs() < 1e-10);
    }

    #[test]
    fn sampled_isotropic_constant_tracks_the_closed_value() {
        // The polar wrapper hides the covariance shortcut but not the
        // volume, so this exercises the sampled-covariance path on a body
        // that is secretly the cube: L must come out at 12^{−1/2}.
        let mu = LogConcaveMeasure::uniform_on_body(Body::lp_ball(3, 1.0, 1.0).unwrap().polar());
        let est = mu.isotropic_constant(8192, stream(10)).unwrap();
        assert_eq!(est.method, Method::MonteCarlo);
        assert!(est.std_err > 0.0);
        let truth = 12f64.powf(-0.5);
        assert!(
            (est.value - truth).abs() < 4.0 * est.std_err.max(1e-3),
            "L = {} ± {}, want {truth}",
            est.value,
            est.std_err
        );

        // No closed volume for a vertex polytope, so sup f is unknown and
        // the constant refuses.
        let diamond = LogConcaveMeasure::uniform_on_body(Body::cross_polytope(2));
        let err = diamond.isotropic_constant(4096, stream(11)).unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Config);
    }

    #[test]
    fn marginal_of_isotropic_is_isotropic() {
        let mu = LogConcaveMeasure::product_law(vec![
            Law1D::Uniform { half_width: 3f64.sqrt() };
            4
        ])
        .unwrap();
        let sub = sampling::sample_grassmannian(4, 2, &mut stream(12).rng()).unwrap();
        let marg = mu.marginal(&sub).unwrap();
        let cov = marg.closed_covariance().unwrap();
        assert!((&cov - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        let pts = marg.sample(20_000, stream(13)).unwrap();
        let sample_cov = pts.tr_mul(&pts) / 20_000.0;
        assert!((&sample_cov - DMatrix::<f64>::identity(2, 2)).amax() < 3.0 * (2.0f64 / 20_000.0).sqrt());
    }
}
