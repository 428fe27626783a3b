//! Scalar functionals of bodies: spherical means, volume radii, extremal
//! section/projection profiles, width-style witness searches, and greedy
//! covering numbers.
//!
//! Every estimator returns an [`EstimateCI`] carrying its method and a
//! standard error; supremum/infimum quantities over Grassmannians are
//! approximated by candidate+refinement searches and flagged with their
//! bias direction.
//!
//! Routing: balls and their scalings/polars short-circuit to closed forms;
//! dimensions 1 and 2 use deterministic quadrature; everything else is
//! block-parallel Monte-Carlo. Blocks derive their own labelled streams, so
//! results do not depend on worker count or scheduling.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::{Body, Subspace};
use crate::error::GeomError;
use crate::sampling::{self, RngStream};
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    ClosedForm,
    Quadrature,
    OptimizationUpperBound,
}

/// A point estimate with a standard error. `std_err == 0` exactly for
/// closed forms; sampled methods carry a strictly positive error.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EstimateCI {
    pub value: f64,
    pub std_err: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub method: Method,
}

impl EstimateCI {
    pub fn closed(value: f64, seed: u64) -> Self {
        EstimateCI { value, std_err: 0.0, n_samples: 1, seed, method: Method::ClosedForm }
    }

    /// Non-closed-form estimate; the error is floored at a few ulps so that
    /// `std_err == 0` remains the closed-form marker.
    pub fn sampled(value: f64, std_err: f64, n_samples: u64, seed: u64, method: Method) -> Self {
        debug_assert!(method != Method::ClosedForm);
        let floor = f64::EPSILON * value.abs() + f64::MIN_POSITIVE;
        EstimateCI { value, std_err: std_err.max(floor), n_samples: n_samples.max(1), seed, method }
    }

    pub fn combined_sigma(&self, other: &EstimateCI) -> f64 {
        (self.std_err * self.std_err + other.std_err * other.std_err).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    Unbiased,
    /// Reported value can only over-estimate the true quantity.
    UpperBiased,
    /// Reported value can only under-estimate the true quantity.
    LowerBiased,
}

/// An indexed curve of estimates (k ↦ w_k, q ↦ h_{Z_q}(θ), ...).
#[derive(Clone, Debug, Serialize)]
pub struct ProfileCurve {
    pub index_name: String,
    pub points: Vec<(f64, EstimateCI)>,
    pub subject: String,
    pub bias: Bias,
}

impl ProfileCurve {
    pub fn new(
        index_name: &str,
        points: Vec<(f64, EstimateCI)>,
        subject: &str,
        bias: Bias,
    ) -> Result<Self, GeomError> {
        if points.is_empty() {
            return Err(GeomError::InvalidParameter("profile needs at least one point".into()));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(GeomError::InvalidParameter(
                "profile indices must be strictly increasing".into(),
            ));
        }
        Ok(ProfileCurve {
            index_name: index_name.to_string(),
            points,
            subject: subject.to_string(),
            bias,
        })
    }

    pub fn values(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|(i, e)| (*i, e.value)).collect()
    }

    /// CSV rows `index,value,std_err,n_samples,bias`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},value,std_err,n_samples,bias\n", self.index_name);
        for (i, e) in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{:?}\n",
                i,
                e.value,
                e.std_err,
                e.n_samples,
                self.bias
            ));
        }
        out
    }
}

/// Extremal volume-radius profiles over the Grassmannian: sections (`w`)
/// or projections (`v`), supremum (plain) or infimum (`minus`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    WK,
    VK,
    WKMinus,
    VKMinus,
}

impl ProfileKind {
    pub fn is_section(self) -> bool {
        matches!(self, ProfileKind::WK | ProfileKind::WKMinus)
    }

    pub fn is_sup(self) -> bool {
        matches!(self, ProfileKind::WK | ProfileKind::VK)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::WK => "w_k",
            ProfileKind::VK => "v_k",
            ProfileKind::WKMinus => "w_k_minus",
            ProfileKind::VKMinus => "v_k_minus",
        }
    }
}

const BLOCK: u64 = 1024;
const REFINE_STEPS: usize = 120;

/// Block-parallel spherical Monte-Carlo: mean and standard error of `f`
/// over uniform directions. Deterministic for a fixed stream regardless of
/// the rayon pool size (streams are derived per block, folded in order).
fn sphere_mc<F>(
    dim: usize,
    n_samples: u64,
    stream: RngStream,
    f: &F,
) -> Result<(f64, f64), GeomError>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let n_blocks = n_samples.div_ceil(BLOCK);
    let parts: Vec<Result<(f64, f64, u64), GeomError>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK.min(n_samples - b * BLOCK);
            let mut rng = stream.derive_indexed("mc_block", b).rng();
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..count {
                let theta = sampling::sample_sphere(dim, &mut rng)?;
                let v = f(&theta);
                if !v.is_finite() {
                    return Err(GeomError::NonFinite(format!(
                        "oracle returned {v} at direction {:?}",
                        theta.as_slice()
                    )));
                }
                sum += v;
                sumsq += v * v;
            }
            Ok((sum, sumsq, count))
        })
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut count = 0u64;
    for part in parts {
        let (s, s2, c) = part?;
        sum += s;
        sumsq += s2;
        count += c;
    }
    let n = count as f64;
    let mean = sum / n;
    let var = ((sumsq / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Midpoint rule over the circle with a halved-resolution error estimate.
/// `nodes` is taken literally; public entry points floor it first.
fn circle_quadrature_at<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    nodes: usize,
) -> Result<(f64, f64, u64), GeomError> {
    let run = |n: usize| -> Result<f64, GeomError> {
        let step = std::f64::consts::TAU / n as f64;
        let mut acc = 0.0;
        for j in 0..n {
            let a = (j as f64 + 0.5) * step;
            let v = f(&DVector::from_row_slice(&[a.cos(), a.sin()]));
            if !v.is_finite() {
                return Err(GeomError::NonFinite(format!("oracle returned {v} at angle {a}")));
            }
            acc += v;
        }
        Ok(acc / n as f64)
    };
    let n = nodes.max(8).next_multiple_of(2);
    let fine = run(n)?;
    let coarse = run(n / 2)?;
    Ok((fine, (fine - coarse).abs(), n as u64))
}

fn circle_quadrature<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    nodes: usize,
) -> Result<(f64, f64, u64), GeomError> {
    circle_quadrature_at(f, nodes.max(tol::QUADRATURE_MIN_NODES))
}

/// Spherical mean of the gauge, `M(K)`.
pub fn mean_norm(body: &Body, n_samples: u64, stream: RngStream) -> Result<EstimateCI, GeomError> {
    if n_samples < 10 {
        return Err(GeomError::InvalidParameter("mean_norm needs >= 10 samples".into()));
    }
    if let Some(v) = body.closed_mean_norm() {
        return Ok(EstimateCI::closed(v, stream.seed()));
    }
    match body.dim() {
        1 => {
            let v = finite_oracle(body.gauge(&DVector::from_row_slice(&[1.0])))?;
            Ok(EstimateCI::closed(v, stream.seed()))
        }
        2 => {
            let (v, err, n) = circle_quadrature(&|t| body.gauge(t), n_samples as usize)?;
            Ok(EstimateCI::sampled(v, err, n, stream.seed(), Method::Quadrature))
        }
        _ => mean_norm_mc(body, n_samples, stream),
    }
}

/// Monte-Carlo `M(K)` regardless of dimension (cross-validation route).
pub fn mean_norm_mc(body: &Body, n_samples: u64, stream: RngStream) -> Result<EstimateCI, GeomError> {
    let (mean, se) = sphere_mc(body.dim(), n_samples, stream, &|t| body.gauge(t))?;
    Ok(EstimateCI::sampled(mean, se, n_samples, stream.seed(), Method::MonteCarlo))
}

/// Spherical mean of the support function, `M*(K) = M(K°)`.
pub fn mean_width(body: &Body, n_samples: u64, stream: RngStream) -> Result<EstimateCI, GeomError> {
    if n_samples < 10 {
        return Err(GeomError::InvalidParameter("mean_width needs >= 10 samples".into()));
    }
    if let Some(v) = body.closed_mean_width() {
        return Ok(EstimateCI::closed(v, stream.seed()));
    }
    match body.dim() {
        1 => {
            let v = finite_oracle(body.support(&DVector::from_row_slice(&[1.0])))?;
            Ok(EstimateCI::closed(v, stream.seed()))
        }
        2 => {
            let (v, err, n) = circle_quadrature(&|t| body.support(t), n_samples as usize)?;
            Ok(EstimateCI::sampled(v, err, n, stream.seed(), Method::Quadrature))
        }
        _ => mean_width_mc(body, n_samples, stream),
    }
}

/// Monte-Carlo `M*(K)` regardless of dimension.
pub fn mean_width_mc(body: &Body, n_samples: u64, stream: RngStream) -> Result<EstimateCI, GeomError> {
    let (mean, se) = sphere_mc(body.dim(), n_samples, stream, &|t| body.support(t))?;
    Ok(EstimateCI::sampled(mean, se, n_samples, stream.seed(), Method::MonteCarlo))
}

fn finite_oracle(v: f64) -> Result<f64, GeomError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GeomError::NonFinite(format!("oracle returned {v}")))
    }
}

/// Volume radius `(|K|/|B₂ⁿ|)^{1/n}`. Closed forms where the representation
/// admits them; quadrature in dimensions 1–2; otherwise the polar-coordinate
/// Monte-Carlo estimator (dimension-capped).
pub fn vrad(body: &Body, budget: u64, stream: RngStream) -> Result<EstimateCI, GeomError> {
    if let Some(v) = body.closed_form_vrad() {
        return Ok(EstimateCI::closed(v, stream.seed()));
    }
    match body.dim() {
        1 => {
            let g = finite_oracle(body.gauge(&DVector::from_row_slice(&[1.0])))?;
            if g <= 0.0 {
                return Err(GeomError::NonFinite("degenerate gauge along e1".into()));
            }
            Ok(EstimateCI::closed(1.0 / g, stream.seed()))
        }
        2 => {
            // |K|/|B₂²| = mean of ρ² over the circle.
            let (m2, err, n) = circle_quadrature(
                &|t| {
                    let g = body.gauge(t);
                    if g > 0.0 {
                        1.0 / (g * g)
                    } else {
                        f64::NAN
                    }
                },
                budget as usize,
            )?;
            let v = m2.sqrt();
            Ok(EstimateCI::sampled(v, err / (2.0 * v), n, stream.seed(), Method::Quadrature))
        }
        _ => vrad_mc(body, budget, stream),
    }
}

/// Block-parallel log-domain spherical mean of `exp(t(θ))`: returns
/// `(ln mean, relative std err, count)`. Keeps the running max per block so
/// n-th-power integrands never overflow.
fn log_mean_exp_mc<F>(
    dim: usize,
    n_samples: u64,
    stream: RngStream,
    label: &str,
    t_fn: &F,
) -> Result<(f64, f64, u64), GeomError>
where
    F: Fn(&DVector<f64>) -> Result<f64, GeomError> + Sync,
{
    let n_blocks = n_samples.div_ceil(BLOCK);
    // Per block: running max of t plus Σe^{t-max} and Σe^{2(t-max)}.
    let parts: Vec<Result<(f64, f64, f64, u64), GeomError>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK.min(n_samples - b * BLOCK);
            let mut rng = stream.derive_indexed(label, b).rng();
            let mut m = f64::NEG_INFINITY;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let theta = sampling::sample_sphere(dim, &mut rng)?;
                let t = t_fn(&theta)?;
                if t > m {
                    let shift = (m - t).exp();
                    s1 = s1 * shift + 1.0;
                    s2 = s2 * shift * shift + 1.0;
                    m = t;
                } else {
                    s1 += (t - m).exp();
                    s2 += (2.0 * (t - m)).exp();
                }
            }
            Ok((m, s1, s2, count))
        })
        .collect();
    let mut m = f64::NEG_INFINITY;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut count = 0u64;
    for part in parts {
        let (bm, bs1, bs2, bc) = part?;
        if bm > m {
            let shift = (m - bm).exp();
            s1 = s1 * shift + bs1;
            s2 = s2 * shift * shift + bs2;
            m = bm;
        } else {
            let shift = (bm - m).exp();
            s1 += bs1 * shift;
            s2 += bs2 * shift * shift;
        }
        count += bc;
    }
    let nn = count as f64;
    let ln_mean = m + s1.ln() - nn.ln();
    let ln_mean_sq = 2.0 * m + s2.ln() - nn.ln();
    let rel_var = ((ln_mean_sq - 2.0 * ln_mean).exp() - 1.0).max(0.0);
    Ok((ln_mean, (rel_var / nn).sqrt(), count))
}

/// Polar-coordinate Monte-Carlo volume radius: `vrad = (E ρⁿ)^{1/n}` with
/// ρ(θ) = 1/‖θ‖_K, accumulated in the log domain. The n-th powers are
/// heavy-tailed, hence the dimension cap.
pub fn vrad_mc(body: &Body, budget: u64, stream: RngStream) -> Result<EstimateCI, GeomError> {
    let n = body.dim();
    if n > tol::VRAD_MC_DIM_CAP {
        return Err(GeomError::DimensionCap { dim: n, cap: tol::VRAD_MC_DIM_CAP });
    }
    if budget < 100 {
        return Err(GeomError::InvalidParameter("vrad Monte-Carlo needs >= 100 samples".into()));
    }
    let nf = n as f64;
    let (ln_mean, rel_se, count) = log_mean_exp_mc(n, budget, stream, "vrad_block", &|theta| {
        let g = body.gauge(theta);
        if !(g.is_finite() && g > 0.0) {
            return Err(GeomError::NonFinite(format!(
                "degenerate gauge {g} at direction {:?}",
                theta.as_slice()
            )));
        }
        Ok(-nf * g.ln())
    })?;
    let value = (ln_mean / nf).exp();
    // Delta method: se(vrad) = vrad · se(mean)/(n·mean).
    let se = value * rel_se / nf;
    Ok(EstimateCI::sampled(value, se, count, stream.seed(), Method::MonteCarlo))
}

/// Volume radius through the polar body, from support evaluations alone:
/// `1/vrad(K°)` with `vrad(K°)ⁿ = E h_K(θ)^{−n}`. No dimension cap and no
/// gauge calls, at the price of an upward bias bounded by the polar-volume
/// product — zero for ellipsoids and their linear images, small for bodies
/// close to one. The estimator of choice for sampled moment bodies in high
/// dimension.
pub fn vrad_from_support(
    body: &Body,
    n_samples: u64,
    stream: RngStream,
) -> Result<EstimateCI, GeomError> {
    if let Some(v) = body.closed_form_vrad() {
        return Ok(EstimateCI::closed(v, stream.seed()));
    }
    if n_samples < 100 {
        return Err(GeomError::InvalidParameter("vrad from support needs >= 100 samples".into()));
    }
    let n = body.dim();
    let nf = n as f64;
    let (ln_mean, rel_se, count) = log_mean_exp_mc(n, n_samples, stream, "support_block", &|theta| {
        let h = body.support(theta);
        if !(h.is_finite() && h > 0.0) {
            return Err(GeomError::NonFinite(format!(
                "degenerate support {h} at direction {:?}",
                theta.as_slice()
            )));
        }
        Ok(-nf * h.ln())
    })?;
    let value = (-ln_mean / nf).exp();
    let se = value * rel_se / nf;
    Ok(EstimateCI::sampled(value, se, count, stream.seed(), Method::MonteCarlo))
}

/// Spherical mean of `1/h_K`, a lower proxy for `M(K)` that needs only
/// support evaluations (1/h ≤ 1/ρ = ‖·‖_K pointwise, with equality exactly
/// for balls).
pub fn mean_norm_support_lower(
    body: &Body,
    n_samples: u64,
    stream: RngStream,
) -> Result<EstimateCI, GeomError> {
    if let Some(v) = body.closed_mean_norm() {
        return Ok(EstimateCI::closed(v, stream.seed()));
    }
    if n_samples < 10 {
        return Err(GeomError::InvalidParameter("mean-norm proxy needs >= 10 samples".into()));
    }
    let (mean, se) = sphere_mc(body.dim(), n_samples, stream, &|t| {
        let h = body.support(t);
        if h > 0.0 {
            1.0 / h
        } else {
            f64::NAN
        }
    })?;
    Ok(EstimateCI::sampled(mean, se, n_samples, stream.seed(), Method::MonteCarlo))
}

/// Budget-faithful volume radius for search probes: same routing as [`vrad`]
/// but without the quadrature node floor, so scoring thousands of candidate
/// subspaces stays proportional to the probe budget.
pub(crate) fn vrad_budgeted(
    body: &Body,
    budget: u64,
    stream: RngStream,
) -> Result<EstimateCI, GeomError> {
    if let Some(v) = body.closed_form_vrad() {
        return Ok(EstimateCI::closed(v, stream.seed()));
    }
    match body.dim() {
        1 => vrad(body, budget, stream),
        2 => {
            let (m2, err, n) = circle_quadrature_at(
                &|t| {
                    let g = body.gauge(t);
                    if g > 0.0 {
                        1.0 / (g * g)
                    } else {
                        f64::NAN
                    }
                },
                budget as usize,
            )?;
            let v = m2.sqrt();
            Ok(EstimateCI::sampled(v, err / (2.0 * v), n, stream.seed(), Method::Quadrature))
        }
        _ => vrad_mc(body, budget.max(100), stream),
    }
}

/// Lexicographic k-subsets of axes as subspaces, capped.
pub(crate) fn axis_subspaces(n: usize, k: usize, cap: usize) -> Vec<Subspace> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(Subspace::from_axes(n, &idx).expect("valid axes"));
        if out.len() >= cap {
            return out;
        }
        // Advance the combination.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

const AXIS_CANDIDATE_CAP: usize = 64;

/// Extremal volume radii of k-dimensional sections/projections.
///
/// For each k the search pool is axis-aligned subspaces (capped) plus
/// `trials_per_k` Haar draws; the best candidate is refined by geodesic
/// random search using a fixed probe stream (common random numbers), and
/// the winner is re-estimated at full budget. Sup-variants are lower-biased
/// (a finite maximum under-estimates the true supremum), inf-variants
/// upper-biased.
pub fn volumetric_profile(
    body: &Body,
    kind: ProfileKind,
    k_list: &[usize],
    trials_per_k: usize,
    budget: u64,
    stream: RngStream,
) -> Result<ProfileCurve, GeomError> {
    let n = body.dim();
    if k_list.is_empty() {
        return Err(GeomError::InvalidParameter("profile k_list is empty".into()));
    }
    if k_list.windows(2).any(|w| w[0] >= w[1]) || k_list[0] < 1 || *k_list.last().unwrap() > n {
        return Err(GeomError::InvalidParameter(format!(
            "profile k_list must be strictly increasing within 1..={n}"
        )));
    }
    if trials_per_k == 0 {
        return Err(GeomError::InvalidParameter("trials_per_k must be >= 1".into()));
    }
    let maximize = kind.is_sup();
    let mut points = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let cell = stream.derive_indexed("profile_cell", k as u64);
        let mut candidates = axis_subspaces(n, k, AXIS_CANDIDATE_CAP);
        let mut draw_rng = cell.derive("draws").rng();
        for _ in 0..trials_per_k {
            candidates.push(sampling::sample_grassmannian(n, k, &mut draw_rng)?);
        }
        let probe_stream = cell.derive("probe");
        let probe_budget = (budget / 4).max(200);
        let score = |sub: &Subspace| -> f64 {
            let derived = if kind.is_section() { body.section(sub) } else { body.project(sub) };
            match derived.and_then(|d| vrad_budgeted(&d, probe_budget, probe_stream)) {
                Ok(e) => e.value,
                Err(_) => {
                    if maximize {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    }
                }
            }
        };
        let mut best = candidates[0].clone();
        let mut best_val = score(&best);
        for cand in &candidates[1..] {
            let v = score(cand);
            if (maximize && v > best_val) || (!maximize && v < best_val) {
                best = cand.clone();
                best_val = v;
            }
        }
        if !best_val.is_finite() {
            // Every candidate failed; surface the underlying error.
            let derived =
                if kind.is_section() { body.section(&best) } else { body.project(&best) }?;
            vrad_budgeted(&derived, probe_budget, probe_stream)?;
        }
        let mut refine_rng = cell.derive("refine").rng();
        let (best, _) = if k < n {
            sampling::refine_subspace(score, &best, maximize, REFINE_STEPS, &mut refine_rng)
        } else {
            (best, best_val)
        };
        let derived = if kind.is_section() { body.section(&best) } else { body.project(&best) }?;
        let est = vrad(&derived, budget, cell.derive("final"))?;
        points.push((k as f64, est));
    }
    let bias = if maximize { Bias::LowerBiased } else { Bias::UpperBiased };
    ProfileCurve::new("k", points, body.variant_name(), bias)
}

/// Largest radial extent of `K ∩ F` (a lower bound on the out-radius):
/// sampled directions in the section plus refinement from the best five.
pub fn out_radius_section(
    body: &Body,
    sub: &Subspace,
    n_dirs: usize,
    stream: RngStream,
) -> Result<f64, GeomError> {
    if n_dirs == 0 {
        return Err(GeomError::InvalidParameter("out_radius needs >= 1 direction".into()));
    }
    let sec = body.section(sub)?;
    let radial = |t: &DVector<f64>| -> f64 {
        let g = sec.gauge(t);
        if g.is_finite() && g > 0.0 {
            1.0 / g
        } else {
            f64::NEG_INFINITY
        }
    };
    extremal_direction(&sec, radial, true, n_dirs, stream)
}

/// Smallest support value of `P_F K` over directions in `F` (an upper bound
/// on the in-radius of the projection).
pub fn in_radius_projection(
    body: &Body,
    sub: &Subspace,
    n_dirs: usize,
    stream: RngStream,
) -> Result<f64, GeomError> {
    if n_dirs == 0 {
        return Err(GeomError::InvalidParameter("in_radius needs >= 1 direction".into()));
    }
    let proj = body.project(sub)?;
    let height = |t: &DVector<f64>| -> f64 {
        let h = proj.support(t);
        if h.is_finite() {
            h
        } else {
            f64::INFINITY
        }
    };
    extremal_direction(&proj, height, false, n_dirs, stream)
}

/// Shared extremal-direction search: axis candidates, random candidates,
/// then geodesic refinement from the best five.
fn extremal_direction<F>(
    body_k: &Body,
    f: F,
    maximize: bool,
    n_dirs: usize,
    stream: RngStream,
) -> Result<f64, GeomError>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let k = body_k.dim();
    let mut rng = stream.derive("dirs").rng();
    let mut cands: Vec<DVector<f64>> = Vec::with_capacity(n_dirs + k);
    for i in 0..k.min(AXIS_CANDIDATE_CAP) {
        let mut e = DVector::zeros(k);
        e[i] = 1.0;
        cands.push(e);
    }
    for _ in 0..n_dirs {
        cands.push(sampling::sample_sphere(k, &mut rng)?);
    }
    let mut scored: Vec<(f64, usize)> =
        cands.iter().enumerate().map(|(i, t)| (f(t), i)).collect();
    scored.sort_by(|a, b| {
        let ord = a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal);
        // Stable tie-break on sample order keeps the search deterministic.
        if maximize {
            ord.reverse().then(a.1.cmp(&b.1))
        } else {
            ord.then(a.1.cmp(&b.1))
        }
    });
    if !scored[0].0.is_finite() {
        return Err(GeomError::NonFinite("oracle failed on every probed direction".into()));
    }
    let mut refine_rng = stream.derive("refine").rng();
    let mut best = scored[0].0;
    for &(_, idx) in scored.iter().take(5) {
        let (_, val) =
            sampling::refine_direction(&f, &cands[idx], maximize, REFINE_STEPS, &mut refine_rng);
        if (maximize && val > best) || (!maximize && val < best) {
            best = val;
        }
    }
    Ok(best)
}

/// Upper bound on the Gelfand-style width: the smallest out-radius found
/// over sampled subspaces of the given codimension, with the witness
/// subspace that attains it.
pub fn gelfand_upper(
    body: &Body,
    codim: usize,
    subspace_trials: usize,
    n_dirs: usize,
    stream: RngStream,
) -> Result<(EstimateCI, Subspace), GeomError> {
    let n = body.dim();
    if codim >= n {
        return Err(GeomError::InvalidParameter(format!(
            "codimension must be below the dimension {n}, got {codim}"
        )));
    }
    let k = n - codim;
    let all: Vec<usize> = (0..n).collect();
    if codim == 0 {
        let sub = Subspace::from_axes(n, &all)?;
        let value = out_radius_section(body, &sub, n_dirs, stream.derive("full"))?;
        let est = EstimateCI::sampled(
            value,
            0.0,
            n_dirs as u64,
            stream.seed(),
            Method::OptimizationUpperBound,
        );
        return Ok((est, sub));
    }
    let mut candidates = axis_subspaces(n, k, AXIS_CANDIDATE_CAP);
    let mut draw_rng = stream.derive("draws").rng();
    for _ in 0..subspace_trials.max(1) {
        candidates.push(sampling::sample_grassmannian(n, k, &mut draw_rng)?);
    }
    let probe_stream = stream.derive("probe");
    let probe_dirs = (n_dirs / 4).max(16);
    let score = |sub: &Subspace| -> f64 {
        out_radius_section(body, sub, probe_dirs, probe_stream).unwrap_or(f64::INFINITY)
    };
    let mut best = candidates[0].clone();
    let mut best_val = score(&best);
    let mut second_val = f64::INFINITY;
    for cand in &candidates[1..] {
        let v = score(cand);
        if v < best_val {
            second_val = best_val;
            best = cand.clone();
            best_val = v;
        } else if v < second_val {
            second_val = v;
        }
    }
    if !best_val.is_finite() {
        out_radius_section(body, &best, probe_dirs, probe_stream)?;
    }
    let mut refine_rng = stream.derive("refine").rng();
    let (witness, _) = sampling::refine_subspace(score, &best, false, REFINE_STEPS, &mut refine_rng);
    let value = out_radius_section(body, &witness, n_dirs, stream.derive("final"))?;
    // Search scatter, not sampling noise: spread between the two best
    // candidate scores signals how well-resolved the minimum is.
    let spread = if second_val.is_finite() { (second_val - best_val).abs() } else { 0.0 };
    let est = EstimateCI::sampled(
        value,
        spread.max(1e-12 * value.abs()),
        n_dirs as u64,
        stream.seed(),
        Method::OptimizationUpperBound,
    );
    Ok((est, witness))
}

/// Greedy covering count: translates of `t·L` centered at lattice points of
/// `K`, lattice pitch halved until two successive counts agree. An upper
/// bound on N(K, tL) by construction.
pub fn covering_number_greedy(k_body: &Body, l_body: &Body, t: f64) -> Result<u64, GeomError> {
    let n = k_body.dim();
    if l_body.dim() != n {
        return Err(GeomError::DimensionMismatch(format!(
            "bodies live in dimensions {n} and {}",
            l_body.dim()
        )));
    }
    if n > 4 {
        return Err(GeomError::Unsupported(format!(
            "greedy covering enumerates lattices only up to dimension 4, got {n}"
        )));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(GeomError::InvalidParameter(format!("scale must be positive, got {t}")));
    }
    let mut radii = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        radii.push(finite_oracle(k_body.support(&e))?);
    }
    let mut pitch = radii.iter().cloned().fold(0.0f64, f64::max) / 2.0;
    let mut previous: Option<u64> = None;
    loop {
        let mut lattice_size = 1u64;
        for &r in &radii {
            lattice_size = lattice_size.saturating_mul(2 * (r / pitch).floor() as u64 + 1);
        }
        if lattice_size > tol::COVERING_MAX_POINTS as u64 {
            return Err(GeomError::ToleranceUnreached(format!(
                "covering lattice would need {lattice_size} points at pitch {pitch:.3e} \
                 without two agreeing refinements"
            )));
        }
        let count = greedy_cover_count(k_body, l_body, t, &radii, pitch)?;
        if previous == Some(count) {
            return Ok(count);
        }
        previous = Some(count);
        pitch /= 2.0;
    }
}

/// One covering instance: the lattice points of K, plus for every point the
/// list of lattice points a translate of t·L centered there would cover
/// (symmetric stencil, so the same list also names the candidate centers
/// covering that point).
struct CoverInstance {
    n: usize,
    pitch: f64,
    threshold: f64,
    l_body: Body,
    coords: Vec<[i64; 4]>,
    adj: Vec<Vec<u32>>,
}

impl CoverInstance {
    fn build(
        k_body: &Body,
        l_body: &Body,
        t: f64,
        radii: &[f64],
        pitch: f64,
    ) -> Result<Self, GeomError> {
        use std::collections::HashMap;
        let n = radii.len();
        let extents: Vec<i64> = radii.iter().map(|r| (r / pitch).floor() as i64).collect();
        let mut coords: Vec<[i64; 4]> = Vec::new();
        let mut z = [0i64; 4];
        for i in 0..n {
            z[i] = -extents[i];
        }
        'outer: loop {
            let p = DVector::from_iterator(n, z[..n].iter().map(|&zi| zi as f64 * pitch));
            if k_body.membership(&p, 1e-9) {
                coords.push(z);
            }
            let mut i = 0;
            loop {
                z[i] += 1;
                if z[i] <= extents[i] {
                    break;
                }
                z[i] = -extents[i];
                i += 1;
                if i == n {
                    break 'outer;
                }
            }
        }
        // Outermost first, lexicographic tie-break: the scan order for
        // greedy candidates and anchors.
        coords.sort_by(|a, b| {
            let na: i64 = a.iter().map(|v| v * v).sum();
            let nb: i64 = b.iter().map(|v| v * v).sum();
            nb.cmp(&na).then_with(|| a.cmp(b))
        });
        let index: HashMap<[i64; 4], u32> =
            coords.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();
        let threshold = t * (1.0 + 1e-9);
        let mut stencil: Vec<[i64; 4]> = Vec::new();
        let mut reach = [0i64; 4];
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let h = finite_oracle(l_body.support(&e))?;
            reach[i] = ((threshold * h) / pitch).floor() as i64;
        }
        let mut d = [0i64; 4];
        for i in 0..n {
            d[i] = -reach[i];
        }
        'stencil: loop {
            let x = DVector::from_iterator(n, d[..n].iter().map(|&di| di as f64 * pitch));
            let g = l_body.gauge(&x);
            if g.is_finite() && g <= threshold {
                stencil.push(d);
            }
            let mut i = 0;
            loop {
                d[i] += 1;
                if d[i] <= reach[i] {
                    break;
                }
                d[i] = -reach[i];
                i += 1;
                if i == n {
                    break 'stencil;
                }
            }
        }
        if coords.len().saturating_mul(stencil.len()) > tol::COVERING_MAX_POINTS {
            return Err(GeomError::ToleranceUnreached(format!(
                "covering adjacency needs {} point-offset pairs at pitch {pitch:.3e}",
                coords.len() * stencil.len()
            )));
        }
        let adj: Vec<Vec<u32>> = coords
            .iter()
            .map(|c| {
                stencil
                    .iter()
                    .filter_map(|s| {
                        let mut q = *c;
                        for i in 0..n {
                            q[i] += s[i];
                        }
                        index.get(&q).copied()
                    })
                    .collect()
            })
            .collect();
        Ok(CoverInstance { n, pitch, threshold, l_body: l_body.clone(), coords, adj })
    }

    fn dist2(&self, a: usize, b: usize) -> i64 {
        (0..self.n)
            .map(|i| {
                let d = self.coords[a][i] - self.coords[b][i];
                d * d
            })
            .sum()
    }

    /// Max-gain greedy. Ties resolve to the candidate farthest from the
    /// centers already placed (otherwise equal-gain picks pile up next to
    /// each other), then to the scan order.
    fn greedy_max_gain(&self, inside_out: bool) -> Vec<usize> {
        let p = self.coords.len();
        let mut gain: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        let mut covered = vec![false; p];
        let mut remaining = p;
        let mut centers: Vec<usize> = Vec::new();
        let order: Vec<usize> =
            if inside_out { (0..p).rev().collect() } else { (0..p).collect() };
        while remaining > 0 {
            let top = gain.iter().copied().max().unwrap_or(0);
            debug_assert!(top > 0, "uncovered points always cover themselves");
            let mut best = usize::MAX;
            let mut best_spread = -1i64;
            for &i in &order {
                if gain[i] != top {
                    continue;
                }
                let spread = centers
                    .iter()
                    .map(|&c| self.dist2(i, c))
                    .min()
                    .unwrap_or(i64::MAX);
                if best == usize::MAX || spread > best_spread {
                    best = i;
                    best_spread = spread;
                }
            }
            self.place(best, &mut covered, &mut remaining, &mut gain);
            centers.push(best);
        }
        centers
    }

    /// Anchored greedy: take the outermost uncovered point and place the
    /// candidate covering it that absorbs the most uncovered points.
    fn greedy_anchored(&self) -> Vec<usize> {
        let p = self.coords.len();
        let mut gain: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        let mut covered = vec![false; p];
        let mut remaining = p;
        let mut centers: Vec<usize> = Vec::new();
        for anchor in 0..p {
            if covered[anchor] {
                continue;
            }
            let mut best = usize::MAX;
            for &cand in &self.adj[anchor] {
                let cand = cand as usize;
                if best == usize::MAX || gain[cand] > gain[best] {
                    best = cand;
                }
            }
            self.place(best, &mut covered, &mut remaining, &mut gain);
            centers.push(best);
        }
        debug_assert_eq!(remaining, 0);
        centers
    }

    fn place(
        &self,
        center: usize,
        covered: &mut [bool],
        remaining: &mut usize,
        gain: &mut [usize],
    ) {
        for &j in &self.adj[center] {
            let j = j as usize;
            if !covered[j] {
                covered[j] = true;
                *remaining -= 1;
                for &c in &self.adj[j] {
                    gain[c as usize] -= 1;
                }
            }
        }
    }

    /// Points covered by no center outside `group`.
    fn exclusive_points(
        &self,
        group: &[usize],
        multiplicity: &[usize],
        seen: &mut [bool],
    ) -> Vec<usize> {
        let mut out = Vec::new();
        for &c in group {
            for &j in &self.adj[c] {
                let j = j as usize;
                if seen[j] {
                    continue;
                }
                let in_group =
                    self.adj[j].iter().filter(|&&x| group.contains(&(x as usize))).count();
                if multiplicity[j] == in_group {
                    seen[j] = true;
                    out.push(j);
                }
            }
        }
        for &j in &out {
            seen[j] = false;
        }
        out
    }

    /// First candidate whose translate covers all of `pts` (it must be a
    /// neighbor of the first one).
    fn cover_with_one(&self, pts: &[usize], mark: &mut [bool]) -> Option<usize> {
        let p0 = *pts.first()?;
        for &p in pts {
            mark[p] = true;
        }
        let mut found = None;
        for &cand in &self.adj[p0] {
            let cand = cand as usize;
            let hit = self.adj[cand].iter().filter(|&&j| mark[j as usize]).count();
            if hit == pts.len() {
                found = Some(cand);
                break;
            }
        }
        for &p in pts {
            mark[p] = false;
        }
        found
    }

    /// Exhaustive two-translate cover of `pts`: the first candidate ranges
    /// over the centers covering pts[0], the second must mop up the rest.
    fn cover_with_two(&self, pts: &[usize], mark: &mut [bool]) -> Option<(usize, usize)> {
        let p0 = *pts.first()?;
        for &c1 in &self.adj[p0].clone() {
            let c1 = c1 as usize;
            for &p in pts {
                mark[p] = true;
            }
            for &j in &self.adj[c1] {
                mark[j as usize] = false;
            }
            let rest: Vec<usize> = pts.iter().copied().filter(|&p| mark[p]).collect();
            for &p in pts {
                mark[p] = false;
            }
            if rest.is_empty() {
                return Some((c1, c1));
            }
            if let Some(c2) = self.cover_with_one(&rest, mark) {
                return Some((c1, c2));
            }
        }
        None
    }

    /// Exchange passes: drop redundant centers, then replace any pair
    /// (triple) whose exclusive points fit in one (two) translates. Every
    /// accepted move shrinks the cover, so the loop terminates.
    fn exchange(&self, centers: &mut Vec<usize>) {
        let p = self.coords.len();
        let mut multiplicity = vec![0usize; p];
        for &c in centers.iter() {
            for &j in &self.adj[c] {
                multiplicity[j as usize] += 1;
            }
        }
        let mut scratch = vec![false; p];
        // Exhaustive pair enumeration inside cover_with_two is quadratic in
        // the stencil size; skip the triple pass when that would dominate.
        let stencil_len = self.adj.iter().map(Vec::len).max().unwrap_or(0);
        let try_triples = stencil_len * stencil_len * stencil_len <= 100_000_000;
        'improve: loop {
            for slot in 0..centers.len() {
                let c = centers[slot];
                if self.adj[c].iter().all(|&j| multiplicity[j as usize] > 1) {
                    for &j in &self.adj[c] {
                        multiplicity[j as usize] -= 1;
                    }
                    centers.swap_remove(slot);
                    continue 'improve;
                }
            }
            for si in 0..centers.len() {
                for sj in si + 1..centers.len() {
                    let pair = [centers[si], centers[sj]];
                    let ex = self.exclusive_points(&pair, &multiplicity, &mut scratch);
                    if let Some(c) = self.cover_with_one(&ex, &mut scratch) {
                        self.swap(&pair, &[c], centers, &mut multiplicity);
                        continue 'improve;
                    }
                }
            }
            if try_triples {
                for si in 0..centers.len() {
                    for sj in si + 1..centers.len() {
                        for sk in sj + 1..centers.len() {
                            let triple = [centers[si], centers[sj], centers[sk]];
                            let ex =
                                self.exclusive_points(&triple, &multiplicity, &mut scratch);
                            if ex.is_empty() {
                                continue;
                            }
                            if let Some((c1, c2)) = self.cover_with_two(&ex, &mut scratch) {
                                let new = if c1 == c2 { vec![c1] } else { vec![c1, c2] };
                                self.swap(&triple, &new, centers, &mut multiplicity);
                                continue 'improve;
                            }
                        }
                    }
                }
            }
            break;
        }
    }

    fn l_dist(&self, buf: &mut DVector<f64>, a: usize, b: usize) -> f64 {
        for i in 0..self.n {
            buf[i] = (self.coords[a][i] - self.coords[b][i]) as f64 * self.pitch;
        }
        self.l_body.gauge(buf)
    }

    /// Try to cover with one center fewer: drop each center in turn
    /// (weakest first) and run reassign/recenter rounds — every point joins
    /// its nearest center, every cluster re-centers at the lattice point
    /// minimizing its worst gauge distance — until the worst distance dips
    /// under t or the configuration stops moving. Greedy plus exchange gets
    /// within one or two of the constructible optimum; this closes the gap.
    fn shrink(&self, centers: &[usize]) -> Option<Vec<usize>> {
        let p = self.coords.len();
        let mut multiplicity = vec![0usize; p];
        for &c in centers {
            for &j in &self.adj[c] {
                multiplicity[j as usize] += 1;
            }
        }
        let mut scratch = vec![false; p];
        let mut order: Vec<usize> = (0..centers.len()).collect();
        let weight: Vec<usize> = (0..centers.len())
            .map(|s| self.exclusive_points(&[centers[s]], &multiplicity, &mut scratch).len())
            .collect();
        order.sort_by_key(|&s| weight[s]);
        for &drop in &order {
            let mut trial: Vec<usize> = centers
                .iter()
                .enumerate()
                .filter(|&(s, _)| s != drop)
                .map(|(_, &c)| c)
                .collect();
            if self.repair(&mut trial) {
                return Some(trial);
            }
        }
        None
    }

    fn repair(&self, centers: &mut [usize]) -> bool {
        let p = self.coords.len();
        let mut buf = DVector::zeros(self.n);
        let mut assign = vec![0u32; p];
        for _ in 0..80 {
            for (i, slot) in assign.iter_mut().enumerate() {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (s, &c) in centers.iter().enumerate() {
                    let d = self.l_dist(&mut buf, i, c);
                    if d < best_d {
                        best_d = d;
                        best = s;
                    }
                }
                *slot = best as u32;
            }
            let mut moved = false;
            let mut worst = 0.0f64;
            for s in 0..centers.len() {
                let members: Vec<usize> =
                    (0..p).filter(|&i| assign[i] == s as u32).collect();
                if members.is_empty() {
                    continue;
                }
                let radius = |c: usize, cap: f64, buf: &mut DVector<f64>| -> f64 {
                    let mut r = 0.0f64;
                    for &i in &members {
                        let d = self.l_dist(buf, i, c);
                        if d > r {
                            r = d;
                            if r >= cap {
                                break;
                            }
                        }
                    }
                    r
                };
                let mut best_c = centers[s];
                let mut best_r = radius(best_c, f64::INFINITY, &mut buf);
                for cand in 0..p {
                    let r = radius(cand, best_r, &mut buf);
                    if r < best_r * (1.0 - 1e-12) {
                        best_r = r;
                        best_c = cand;
                    }
                }
                if best_c != centers[s] {
                    centers[s] = best_c;
                    moved = true;
                }
                worst = worst.max(best_r);
            }
            if worst <= self.threshold {
                return true;
            }
            if !moved {
                return false;
            }
        }
        false
    }

    fn swap(
        &self,
        old: &[usize],
        new: &[usize],
        centers: &mut Vec<usize>,
        multiplicity: &mut [usize],
    ) {
        for &c in old {
            for &j in &self.adj[c] {
                multiplicity[j as usize] -= 1;
            }
        }
        for &c in new {
            for &j in &self.adj[c] {
                multiplicity[j as usize] += 1;
            }
        }
        let mut slots: Vec<usize> = old
            .iter()
            .map(|c| centers.iter().position(|x| x == c).expect("center present"))
            .collect();
        slots.sort_unstable_by(|a, b| b.cmp(a));
        for s in slots {
            centers.swap_remove(s);
        }
        centers.extend_from_slice(new);
    }
}

/// Best cover of the lattice points of K among three deterministic greedy
/// constructions, each tightened by the exchange passes. All three are
/// covers, so the minimum is one too.
fn greedy_cover_count(
    k_body: &Body,
    l_body: &Body,
    t: f64,
    radii: &[f64],
    pitch: f64,
) -> Result<u64, GeomError> {
    let instance = CoverInstance::build(k_body, l_body, t, radii, pitch)?;
    let starts = [
        instance.greedy_max_gain(false),
        instance.greedy_max_gain(true),
        instance.greedy_anchored(),
    ];
    let mut best: Option<Vec<usize>> = None;
    for mut centers in starts {
        instance.exchange(&mut centers);
        if best.as_ref().is_none_or(|b| centers.len() < b.len()) {
            best = Some(centers);
        }
    }
    let mut best = best.expect("at least one start");
    while best.len() > 1 {
        match instance.shrink(&best) {
            Some(smaller) => best = smaller,
            None => break,
        }
    }
    Ok(best.len() as u64)
}

/// Volume obstruction `(vrad(K)/(t·vrad(L)))^n ≤ N(K, tL)`.
pub fn covering_lower_volumetric(
    k_body: &Body,
    l_body: &Body,
    t: f64,
    budget: u64,
    stream: RngStream,
) -> Result<f64, GeomError> {
    let n = k_body.dim();
    if l_body.dim() != n {
        return Err(GeomError::DimensionMismatch(format!(
            "bodies live in dimensions {n} and {}",
            l_body.dim()
        )));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(GeomError::InvalidParameter(format!("scale must be positive, got {t}")));
    }
    let vk = vrad(k_body, budget, stream.derive("numerator"))?;
    let vl = vrad(l_body, budget, stream.derive("denominator"))?;
    Ok((vk.value / (t * vl.value)).powi(n as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SQ: f64 = std::f64::consts::SQRT_2;

    fn stream() -> RngStream {
        RngStream::new(0x5eed, 0)
    }

    #[test]
    fn ball_means_are_closed_form() {
        let b = Body::euclidean_ball(8, 2.0).unwrap();
        let m = mean_norm(&b, 100, stream()).unwrap();
        assert_eq!(m.method, Method::ClosedForm);
        assert_eq!(m.value, 0.5);
        let w = mean_width(&b, 100, stream()).unwrap();
        assert_eq!(w.value, 2.0);
        let wp = mean_width(&b.polar(), 100, stream()).unwrap();
        assert_eq!(wp.value, 0.5);
    }

    #[test]
    fn square_quadrature_hits_the_arc_integrals() {
        let square = Body::cube(2);
        let m = mean_norm(&square, 200_000, stream()).unwrap();
        assert_eq!(m.method, Method::Quadrature);
        assert_relative_eq!(m.value, 2.0 * SQ / std::f64::consts::PI, epsilon = 1e-8);
        let w = mean_width(&square, 200_000, stream()).unwrap();
        assert_relative_eq!(w.value, 4.0 / std::f64::consts::PI, epsilon = 1e-8);
        let v = vrad(&square, 200_000, stream()).unwrap();
        assert_relative_eq!(v.value, (4.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn mc_mean_norm_tracks_quadrature_on_the_square() {
        let square = Body::cube(2);
        let q = mean_norm(&square, 100_000, stream()).unwrap();
        let mc = mean_norm_mc(&square, 200_000, stream().derive("mc")).unwrap();
        assert!(
            (mc.value - q.value).abs() < 4.0 * mc.std_err,
            "mc {} vs quadrature {} (se {})",
            mc.value,
            q.value,
            mc.std_err
        );
    }

    #[test]
    fn vrad_closed_forms() {
        let e = Body::ellipsoid(nalgebra::DMatrix::from_diagonal(
            &DVector::from_row_slice(&[16.0, 1.0, 1.0, 1.0]),
        ))
        .unwrap();
        assert_relative_eq!(vrad(&e, 100, stream()).unwrap().value, SQ, max_relative = 1e-12);
        let b1 = Body::lp_ball(3, 1.0, 1.0).unwrap();
        // |B₁³| = 8/6; |B₂³| = 4π/3 → vrad = (1/π)^{1/3}.
        assert_relative_eq!(
            vrad(&b1, 100, stream()).unwrap().value,
            (1.0 / std::f64::consts::PI).powf(1.0 / 3.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn vrad_mc_matches_closed_form_on_cross_polytope() {
        let b1 = Body::lp_ball(4, 1.0, 1.0).unwrap();
        let truth = vrad(&b1, 100, stream()).unwrap().value;
        let est = vrad_mc(&b1, 400_000, stream().derive("mc")).unwrap();
        assert!(
            (est.value - truth).abs() < 4.0 * est.std_err,
            "mc {} ± {} vs {}",
            est.value,
            est.std_err,
            truth
        );
        assert!(est.std_err < 0.01);
    }

    #[test]
    fn vrad_mc_respects_dimension_cap() {
        let c = Body::cube(33);
        match vrad_mc(&c, 1000, stream()) {
            Err(GeomError::DimensionCap { dim: 33, cap }) => assert_eq!(cap, 32),
            other => panic!("expected dimension cap, got {other:?}"),
        }
    }

    #[test]
    fn profile_of_long_ellipsoid_finds_the_long_axis() {
        let e = Body::ellipsoid(nalgebra::DMatrix::from_diagonal(
            &DVector::from_row_slice(&[16.0, 1.0, 1.0, 1.0]),
        ))
        .unwrap();
        let w = volumetric_profile(&e, ProfileKind::WK, &[1, 2, 3, 4], 4, 1000, stream()).unwrap();
        assert_eq!(w.bias, Bias::LowerBiased);
        assert_relative_eq!(w.points[0].1.value, 4.0, max_relative = 1e-9);
        assert_relative_eq!(w.points[3].1.value, SQ, max_relative = 1e-9);
        let v = volumetric_profile(&e, ProfileKind::VK, &[1, 2, 3, 4], 4, 1000, stream()).unwrap();
        assert_relative_eq!(v.points[0].1.value, 4.0, max_relative = 1e-9);
        assert_relative_eq!(v.points[1].1.value, 2.0, max_relative = 1e-9);
        assert_relative_eq!(v.points[2].1.value, 16.0f64.powf(1.0 / 6.0), max_relative = 1e-9);
    }

    #[test]
    fn ball_sandwich_is_tight() {
        let b = Body::lp_ball(4, 2.0, 1.0).unwrap();
        let s = stream();
        let m = mean_norm(&b, 20_000, s.derive("m")).unwrap();
        let w = mean_width(&b, 20_000, s.derive("w")).unwrap();
        let v = vrad_mc(&b, 20_000, s.derive("v")).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        assert!((w.value - 1.0).abs() < 1e-12);
        assert!((v.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn out_and_in_radii_on_the_square_diagonal() {
        let square = Body::cube(2);
        let diag = Subspace::new(nalgebra::DMatrix::from_column_slice(2, 1, &[SQ / 2.0, SQ / 2.0]))
            .unwrap();
        let out = out_radius_section(&square, &diag, 32, stream()).unwrap();
        assert_relative_eq!(out, SQ, max_relative = 1e-9);
        let inr = in_radius_projection(&square, &diag, 32, stream()).unwrap();
        assert_relative_eq!(inr, SQ, max_relative = 1e-9);
        let axis = Subspace::from_axes(2, &[0]).unwrap();
        assert_relative_eq!(
            in_radius_projection(&square, &axis, 32, stream()).unwrap(),
            1.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn gelfand_upper_kills_the_long_axis() {
        let e = Body::ellipsoid(nalgebra::DMatrix::from_diagonal(
            &DVector::from_row_slice(&[16.0, 1.0, 1.0, 1.0]),
        ))
        .unwrap();
        let (est, witness) = gelfand_upper(&e, 1, 8, 64, stream()).unwrap();
        assert_eq!(est.method, Method::OptimizationUpperBound);
        assert!(est.value <= 1.0 + 1e-9, "got {}", est.value);
        // The witness must be orthogonal to the long axis.
        let e1 = DVector::from_row_slice(&[1.0, 0.0, 0.0, 0.0]);
        assert!(witness.restrict(&e1).norm() < 1e-6);
    }

    #[test]
    fn greedy_covering_of_the_disk() {
        let disk = Body::euclidean_ball(2, 1.0).unwrap();
        let n = covering_number_greedy(&disk, &disk, 0.5).unwrap();
        assert!((4..=7).contains(&n), "greedy count {n}");
        assert_eq!(covering_number_greedy(&disk, &disk, 1.0).unwrap(), 1);
        let lower = covering_lower_volumetric(&disk, &disk, 0.5, 1000, stream()).unwrap();
        assert_relative_eq!(lower, 4.0, max_relative = 1e-9);
        assert!(n as f64 >= lower);
    }

    #[test]
    fn segment_covering_matches_halving() {
        let seg = Body::cube(1);
        assert_eq!(covering_number_greedy(&seg, &seg, 1.0).unwrap(), 1);
        assert_eq!(covering_number_greedy(&seg, &seg, 0.5).unwrap(), 2);
    }

    #[test]
    fn profile_rejects_bad_grids() {
        let b = Body::cube(3);
        assert!(volumetric_profile(&b, ProfileKind::WK, &[], 1, 500, stream()).is_err());
        assert!(volumetric_profile(&b, ProfileKind::WK, &[2, 2], 1, 500, stream()).is_err());
        assert!(volumetric_profile(&b, ProfileKind::WK, &[1, 5], 1, 500, stream()).is_err());
    }
}
