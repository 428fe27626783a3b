//! Moment bodies of a measure: support values `(E|⟨x,y⟩|^q)^{1/q}`, the
//! bodies they carve out, and the growth constant of the support in `q`.
//!
//! Estimation is capped at `q ≤ 2·log₂(n_samples)`: beyond that the q-th
//! moment rides on a handful of extreme draws and the estimate is noise, so
//! the operations refuse and report the sample count that would do.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::LogConcaveMeasure;
use crate::bodies::Body;
use crate::error::GeomError;
use crate::functionals::{Bias, EstimateCI, Method};
use crate::linalg;
use crate::sampling::{self, RngStream};
use crate::tol;

/// Largest moment order trusted at a given sample count.
pub fn q_cap(n_samples: usize) -> f64 {
    tol::Q_CAP_FACTOR * (n_samples as f64).log2()
}

pub(crate) fn require_q(q: f64, n_samples: usize) -> Result<(), GeomError> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(GeomError::InvalidParameter(format!("moment order must be >= 1, got {q}")));
    }
    let cap = q_cap(n_samples);
    if q > cap {
        return Err(GeomError::MomentCap {
            q,
            cap,
            n_samples: n_samples as u64,
            required: 2f64.powf(q / tol::Q_CAP_FACTOR).ceil() as u64,
        });
    }
    Ok(())
}

/// `E|g|^q = 2^{q/2}·Γ((q+1)/2)/√π` for the standard Gaussian.
pub(crate) fn gaussian_abs_moment(q: f64) -> f64 {
    (0.5 * q * std::f64::consts::LN_2 + linalg::lgamma((q + 1.0) / 2.0)
        - 0.5 * std::f64::consts::PI.ln())
    .exp()
}

/// Exact `h_{Z_q}(y)` where the measure admits one: Gaussians in every
/// direction, product laws along coordinate axes, and linear images and
/// marginals of those by pulling `y` back (`⟨Tx,y⟩ = ⟨x,Tᵀy⟩`).
pub(crate) fn closed_support(
    measure: &LogConcaveMeasure,
    q: f64,
    y: &DVector<f64>,
) -> Option<f64> {
    if measure.is_standard_gaussian() {
        return Some(y.norm() * gaussian_abs_moment(q).powf(1.0 / q));
    }
    if let Some(laws) = measure.product_laws() {
        let mut nonzero = None;
        for i in 0..y.len() {
            if y[i] != 0.0 {
                if nonzero.is_some() {
                    return None;
                }
                nonzero = Some(i);
            }
        }
        let i = nonzero?;
        return Some(y[i].abs() * laws[i].abs_moment(q).powf(1.0 / q));
    }
    if let Some((inner, map)) = measure.linear_parts() {
        return closed_support(inner, q, &map.tr_mul(y));
    }
    if let Some((inner, sub)) = measure.marginal_parts() {
        return closed_support(inner, q, &sub.lift(y));
    }
    None
}

/// Empirical `(mean |⟨x_i,y⟩|^q)^{1/q}` and its delta-method standard
/// error, max-rescaled so large `q` cannot overflow.
pub(crate) fn moment_support_est(pts: &DMatrix<f64>, q: f64, y: &DVector<f64>) -> (f64, f64) {
    let r = pts * y;
    let m = r.abs().max();
    if m == 0.0 {
        return (0.0, 0.0);
    }
    let nn = r.len() as f64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for t in r.iter() {
        let s = (t.abs() / m).powf(q);
        sum += s;
        sumsq += s * s;
    }
    let mq = sum / nn;
    let var = (sumsq / nn - mq * mq).max(0.0);
    let se_mq = (var / nn).sqrt();
    let h = m * mq.powf(1.0 / q);
    // dh/d(mq) = h/(q·mq).
    let se = if mq > 0.0 { h * se_mq / (q * mq) } else { 0.0 };
    (h, se)
}

/// `h_{Z_q(μ)}(y) = (E|⟨x,y⟩|^q)^{1/q}`, closed where possible, otherwise
/// from a fresh sample matrix.
pub fn centroid_body_support(
    measure: &LogConcaveMeasure,
    q: f64,
    y: &DVector<f64>,
    n_samples: usize,
    stream: RngStream,
) -> Result<EstimateCI, GeomError> {
    if y.len() != measure.dim() {
        return Err(GeomError::DimensionMismatch(format!(
            "direction has length {}, measure dimension {}",
            y.len(),
            measure.dim()
        )));
    }
    require_q(q, n_samples)?;
    if let Some(v) = closed_support(measure, q, y) {
        return Ok(EstimateCI::closed(v, stream.seed()));
    }
    let pts = measure.sample(n_samples, stream.derive("moment_samples"))?;
    let (h, se) = moment_support_est(&pts, q, y);
    Ok(EstimateCI::sampled(h, se, n_samples as u64, stream.seed(), Method::MonteCarlo))
}

/// The body `Z_q(μ)`. Gaussian measures give an exact ball; everything else
/// draws one sample matrix that the returned body shares across all of its
/// support evaluations (correlated directions, one sampling cost).
pub fn centroid_body(
    measure: &LogConcaveMeasure,
    q: f64,
    n_samples: usize,
    stream: RngStream,
) -> Result<Body, GeomError> {
    require_q(q, n_samples)?;
    if measure.is_standard_gaussian() {
        return Body::euclidean_ball(measure.dim(), gaussian_abs_moment(q).powf(1.0 / q));
    }
    let pts = measure.sample(n_samples, stream.derive("moment_samples"))?;
    Body::from_moment_samples(Arc::new(pts), q)
}

/// Moment-growth constant estimate: how fast `h_{Z_q}` can grow against
/// `q^{1/α}`.
#[derive(Clone, Debug)]
pub struct PsiAlphaEstimate {
    pub estimate: EstimateCI,
    /// Always [`Bias::LowerBiased`]: a supremum probed on finite grids.
    pub bias: Bias,
    /// Grid point where the supremum was attained.
    pub attained_q: f64,
}

/// `sup_{q,θ} h_{Z_q}(θ)/(q^{1/α}·h_{Z_2}(θ))` over the given `q` grid, the
/// coordinate axes, and `n_dirs` random directions. One sample matrix is
/// shared by every probe; its error enters twice per ratio and the two are
/// positively correlated, so the reported error is conservative.
pub fn psi_alpha_constant(
    measure: &LogConcaveMeasure,
    alpha: f64,
    q_grid: &[f64],
    n_dirs: usize,
    n_samples: usize,
    stream: RngStream,
) -> Result<PsiAlphaEstimate, GeomError> {
    if !(1.0..=2.0).contains(&alpha) {
        return Err(GeomError::InvalidParameter(format!(
            "moment-growth exponent must lie in [1, 2], got {alpha}"
        )));
    }
    if q_grid.is_empty() {
        return Err(GeomError::InvalidParameter("need a nonempty q grid".into()));
    }
    for &q in q_grid {
        if q < 2.0 {
            return Err(GeomError::InvalidParameter(format!("q grid starts at 2, got {q}")));
        }
        require_q(q, n_samples)?;
    }
    let n = measure.dim();
    let mut dirs: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rng = stream.derive("directions").rng();
    for _ in 0..n_dirs {
        dirs.push(sampling::sample_sphere(n, &mut rng)?);
    }

    // Drawn lazily: a fully closed-form measure never pays for samples.
    let mut samples: Option<DMatrix<f64>> = None;
    let mut probe = |q: f64, theta: &DVector<f64>| -> Result<(f64, f64), GeomError> {
        if let Some(v) = closed_support(measure, q, theta) {
            return Ok((v, 0.0));
        }
        if samples.is_none() {
            samples = Some(measure.sample(n_samples, stream.derive("moment_samples"))?);
        }
        Ok(moment_support_est(samples.as_ref().unwrap(), q, theta))
    };

    let mut best: Option<(f64, f64, f64)> = None;
    for &q in q_grid {
        let weight = q.powf(1.0 / alpha);
        for theta in &dirs {
            let (h2, se2) = probe(2.0, theta)?;
            if h2 <= 0.0 {
                continue;
            }
            let (hq, seq) = probe(q, theta)?;
            let ratio = hq / (weight * h2);
            let se = if seq == 0.0 && se2 == 0.0 {
                0.0
            } else {
                ratio * ((seq / hq).powi(2) + (se2 / h2).powi(2)).sqrt()
            };
            if best.map_or(true, |(r, _, _)| ratio > r) {
                best = Some((ratio, se, q));
            }
        }
    }
    let (ratio, se, attained_q) = best.ok_or_else(|| {
        GeomError::NonFinite("every probed direction had zero second moment".into())
    })?;
    let estimate = if se == 0.0 {
        EstimateCI::closed(ratio, stream.seed())
    } else {
        EstimateCI::sampled(ratio, se, n_samples as u64, stream.seed(), Method::MonteCarlo)
    };
    Ok(PsiAlphaEstimate { estimate, bias: Bias::LowerBiased, attained_q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Law1D;

    fn stream(label: u64) -> RngStream {
        RngStream::new(20_240_818, label)
    }

    #[test]
    fn gaussian_fourth_moment_radius_is_closed() {
        let mu = LogConcaveMeasure::standard_gaussian(3).unwrap();
        let y = DVector::from_row_slice(&[0.0, 2.0, 0.0]);
        let h = centroid_body_support(&mu, 4.0, &y, 64, stream(1)).unwrap();
        assert_eq!(h.method, Method::ClosedForm);
        assert!((h.value - 2.0 * 3f64.powf(0.25)).abs() < 1e-12);
        // Second moment of any isotropic closed-form family is 1.
        let e = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        let h2 = centroid_body_support(&mu, 2.0, &e, 64, stream(2)).unwrap();
        assert!((h2.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_uniform_coordinate_moment_matches_the_plugin() {
        // Uniform on [−1/2,1/2] scaled by √12 has half-width √3, variance 1,
        // and fourth moment 9/5.
        let mu = LogConcaveMeasure::product_law(vec![
            Law1D::Uniform { half_width: 3f64.sqrt() };
            4
        ])
        .unwrap();
        let e1 = DVector::from_row_slice(&[1.0, 0.0, 0.0, 0.0]);
        let h = centroid_body_support(&mu, 4.0, &e1, 64, stream(3)).unwrap();
        assert_eq!(h.method, Method::ClosedForm);
        assert!((h.value - (9f64 / 5.0).powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn sampled_support_agrees_with_the_closed_value_off_axis() {
        // ⟨x, (1,1)/√2⟩ is standard normal for a product of two standard
        // Gaussians, but the off-axis direction forces the sampled path.
        let mu = LogConcaveMeasure::product_law(vec![Law1D::Gaussian { sigma: 1.0 }; 2]).unwrap();
        let y = DVector::from_row_slice(&[std::f64::consts::FRAC_1_SQRT_2; 2]);
        let h = centroid_body_support(&mu, 4.0, &y, 200_000, stream(4)).unwrap();
        assert_eq!(h.method, Method::MonteCarlo);
        assert!(h.std_err > 0.0);
        let truth = 3f64.powf(0.25);
        assert!(
            (h.value - truth).abs() < 4.0 * h.std_err,
            "h = {} ± {}, want {truth}",
            h.value,
            h.std_err
        );
    }

    #[test]
    fn moment_orders_above_the_cap_refuse_with_the_required_count() {
        let mu = LogConcaveMeasure::standard_gaussian(2).unwrap();
        let y = DVector::from_row_slice(&[1.0, 0.0]);
        let err = centroid_body_support(&mu, 50.0, &y, 1024, stream(5)).unwrap_err();
        match err {
            GeomError::MomentCap { cap, required, .. } => {
                assert_eq!(cap, 20.0);
                assert_eq!(required, 1 << 25);
            }
            other => panic!("expected a moment-cap refusal, got {other}"),
        }
    }

    #[test]
    fn gaussian_body_is_a_ball_and_sampled_bodies_share_their_matrix() {
        let mu = LogConcaveMeasure::standard_gaussian(5).unwrap();
        let z4 = centroid_body(&mu, 4.0, 64, stream(6)).unwrap();
        assert_eq!(z4.variant_name(), "euclidean_ball");
        let theta = DVector::from_row_slice(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((z4.support(&theta) - 3f64.powf(0.25)).abs() < 1e-12);

        let cube = LogConcaveMeasure::product_law(vec![
            Law1D::Uniform { half_width: 3f64.sqrt() };
            3
        ])
        .unwrap();
        let z2 = centroid_body(&cube, 2.0, 65_536, stream(7)).unwrap();
        let e1 = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        // Isotropic input: the empirical second-moment body is the unit
        // ball up to sampling error.
        assert!((z2.support(&e1) - 1.0).abs() < 0.01, "support {}", z2.support(&e1));
        let skew = DVector::from_row_slice(&[0.6, 0.8, 0.0]);
        assert!((z2.support(&skew) - 1.0).abs() < 0.01);
    }

    #[test]
    fn projecting_the_body_and_taking_the_marginal_commute_closed() {
        let mu = LogConcaveMeasure::standard_gaussian(4).unwrap();
        let sub = sampling::sample_grassmannian(4, 2, &mut stream(8).rng()).unwrap();
        let lhs = centroid_body(&mu, 6.0, 64, stream(9)).unwrap().project(&sub).unwrap();
        let rhs = centroid_body(&mu.marginal(&sub).unwrap(), 6.0, 64, stream(10)).unwrap();
        let theta = DVector::from_row_slice(&[0.28, -0.96]);
        assert!((lhs.support(&theta) - rhs.support(&theta)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_growth_constant_peaks_at_the_bottom_of_the_grid() {
        let mu = LogConcaveMeasure::standard_gaussian(3).unwrap();
        let est = psi_alpha_constant(&mu, 2.0, &[2.0, 4.0, 8.0, 16.0], 4, 70_000, stream(11))
            .unwrap();
        assert_eq!(est.estimate.method, Method::ClosedForm);
        assert_eq!(est.bias, Bias::LowerBiased);
        assert_eq!(est.attained_q, 2.0);
        assert!((est.estimate.value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn heavier_tails_push_the_growth_constant_up_the_grid() {
        let mu = LogConcaveMeasure::product_law(vec![
            Law1D::SymmetricExponential { lambda: 1.0 };
            2
        ])
        .unwrap();
        // Against q^{1/2} the exponential ratio (q!)^{1/q}/√(2q) grows, so
        // the supremum sits at the top of the grid.
        let b2 = psi_alpha_constant(&mu, 2.0, &[2.0, 4.0, 8.0], 0, 256, stream(12)).unwrap();
        assert_eq!(b2.attained_q, 8.0);
        // Against q itself it decays, and the α=1 value is the smaller one.
        let b1 = psi_alpha_constant(&mu, 1.0, &[2.0, 4.0, 8.0], 0, 256, stream(13)).unwrap();
        assert_eq!(b1.attained_q, 2.0);
        assert!(b1.estimate.value <= b2.estimate.value);
        let expect = (2f64).sqrt() / (2.0 * 2f64.sqrt());
        assert!((b1.estimate.value - expect).abs() < 1e-12, "b1 = {}", b1.estimate.value);
    }
}
