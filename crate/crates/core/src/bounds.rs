//! Closed-shape bound evaluators. Every formula here is deterministic,
//! has its universal constant normalized to 1, and returns a [`BoundValue`]
//! echoing its inputs, so downstream comparisons always go through a fitted
//! constant rather than an asserted one. Logarithms are natural, in the
//! `log(e + ·)` form that keeps arguments at least 1.
//!
//! Formulas taking a whole profile accept sparse ones: missing integer
//! indices are filled by monotone (shape-preserving cubic) interpolation
//! and the fill is flagged on the result.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::GeomError;
use crate::functionals::ProfileCurve;

/// Result of a bound evaluation: the number, which formula produced it,
/// an `name=value` echo of the inputs, and any caveat flags
/// (`interpolated`, `extrapolated`, `beyond_valid_q_range`).
#[derive(Clone, Debug, Serialize)]
pub struct BoundValue {
    pub value: f64,
    pub formula_id: &'static str,
    pub inputs_digest: String,
    pub flags: Vec<String>,
}

impl BoundValue {
    fn new(value: f64, formula_id: &'static str, inputs: &[(&str, f64)]) -> Self {
        let inputs_digest = inputs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        debug_assert!(value >= 0.0, "{formula_id} produced {value}");
        BoundValue { value, formula_id, inputs_digest, flags: Vec::new() }
    }

    fn flagged(mut self, flags: Vec<String>) -> Self {
        self.flags = flags;
        self
    }
}

fn log_e(x: f64) -> f64 {
    (std::f64::consts::E + x).ln()
}

fn check_range(k: usize, n: usize) -> Result<(), GeomError> {
    if k == 0 || k > n {
        return Err(GeomError::InvalidParameter(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    Ok(())
}

/// Shape-preserving cubic through strictly increasing knots: the classic
/// weighted-harmonic tangent choice, which cannot overshoot monotone data.
/// Evaluation clamps outside the knot range.
struct MonotoneInterp {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl MonotoneInterp {
    fn new(points: &[(f64, f64)]) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let np = xs.len();
        let mut ms = vec![0.0; np];
        if np >= 2 {
            let h: Vec<f64> = (0..np - 1).map(|i| xs[i + 1] - xs[i]).collect();
            let d: Vec<f64> = (0..np - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
            ms[0] = d[0];
            ms[np - 1] = d[np - 2];
            for i in 1..np - 1 {
                if d[i - 1] * d[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    ms[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
                }
            }
        }
        MonotoneInterp { xs, ys, ms }
    }

    fn eval(&self, x: f64) -> f64 {
        let np = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[np - 1] {
            return self.ys[np - 1];
        }
        let i = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.ms[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.ms[i + 1]
    }
}

/// Values of the profile at every integer index in `lo..=hi`, interpolating
/// where the curve is sparse and clamping beyond its ends; the second
/// component says which of that happened.
fn complete_profile(
    profile: &ProfileCurve,
    lo: usize,
    hi: usize,
) -> Result<(Vec<f64>, Vec<String>), GeomError> {
    let pts = profile.values();
    let interp = MonotoneInterp::new(&pts);
    let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
    let mut knots: BTreeMap<u64, f64> = BTreeMap::new();
    for (x, y) in &pts {
        if x.fract() == 0.0 && *x >= 1.0 {
            knots.insert(*x as u64, *y);
        }
    }
    let mut out = Vec::with_capacity(hi - lo + 1);
    let mut interpolated = false;
    let mut extrapolated = false;
    for idx in lo..=hi {
        if let Some(v) = knots.get(&(idx as u64)) {
            out.push(*v);
            continue;
        }
        let x = idx as f64;
        if x < first || x > last {
            extrapolated = true;
        } else {
            interpolated = true;
        }
        out.push(interp.eval(x));
    }
    let mut flags = Vec::new();
    if interpolated {
        flags.push("interpolated".to_string());
    }
    if extrapolated {
        flags.push("extrapolated".to_string());
    }
    Ok((out, flags))
}

/// Entropy-number shape for an ellipsoid: `sup_m 2^{−j/m}·(geometric mean
/// of the m largest semiaxes)`, with `m ≤ min(j, #axes)`.
pub fn ellipsoid_entropy(semiaxes: &[f64], j: usize) -> Result<BoundValue, GeomError> {
    if semiaxes.is_empty() {
        return Err(GeomError::InvalidParameter("need at least one semiaxis".into()));
    }
    if j == 0 {
        return Err(GeomError::InvalidParameter("entropy index j must be >= 1".into()));
    }
    if semiaxes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(GeomError::InvalidParameter("semiaxes must be positive".into()));
    }
    let mut axes = semiaxes.to_vec();
    axes.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut log_sum = 0.0;
    let mut best = f64::NEG_INFINITY;
    for (m, a) in axes.iter().take(j).enumerate() {
        log_sum += a.ln();
        let m1 = (m + 1) as f64;
        // m = 0 keeps the largest axis exact instead of exp(ln a).
        let geo = if m == 0 { axes[0] } else { (log_sum / m1).exp() };
        best = best.max((-(j as f64) / m1).exp2() * geo);
    }
    let mut inputs = vec![("j", j as f64)];
    inputs.extend(semiaxes.iter().map(|a| ("a", *a)));
    Ok(BoundValue::new(best, "ellipsoid_entropy", &inputs))
}

/// Covering-number shape from a section-width profile:
/// `(n/k)·log(e+n/k)·sup_m 2^{−k/(3m)}·w_m` over `1 ≤ m ≤ min(k,n)`.
pub fn covering_from_widths(
    w_profile: &ProfileCurve,
    k: usize,
    n: usize,
) -> Result<BoundValue, GeomError> {
    check_range(k, n)?;
    let top = k.min(n);
    let (w, flags) = complete_profile(w_profile, 1, top)?;
    let mut sup = f64::NEG_INFINITY;
    for (m, wm) in w.iter().enumerate() {
        sup = sup.max((-(k as f64) / (3.0 * (m + 1) as f64)).exp2() * wm);
    }
    let ratio = n as f64 / k as f64;
    let value = ratio * log_e(ratio) * sup;
    Ok(BoundValue::new(value, "covering_from_widths", &[("k", k as f64), ("n", n as f64)])
        .flagged(flags))
}

fn dudley_sum(
    profile: &ProfileCurve,
    n: usize,
    term: impl Fn(f64, f64) -> f64,
) -> Result<(f64, Vec<String>), GeomError> {
    if n == 0 {
        return Err(GeomError::InvalidParameter("dimension must be >= 1".into()));
    }
    let (vals, flags) = complete_profile(profile, 1, n)?;
    if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(GeomError::InvalidParameter(
            "profile values must be positive for the entropy sum".into(),
        ));
    }
    let mut sum = 0.0;
    for (i, v) in vals.iter().enumerate() {
        let k = (i + 1) as f64;
        let pre = (n as f64 / k) * log_e(n as f64 / k);
        sum += term(pre, *v) / k.sqrt();
    }
    Ok((sum / (n as f64).sqrt(), flags))
}

/// Entropy-sum estimate of the mean norm for `K ⊇ r·B`:
/// `(1/√n)·Σ_k k^{−1/2}·min(1/r, (n/k)log(e+n/k)/v_k⁻)`.
pub fn dudley_mean_norm(
    v_minus_profile: &ProfileCurve,
    r: f64,
    n: usize,
) -> Result<BoundValue, GeomError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(GeomError::InvalidParameter(format!("in-radius must be positive, got {r}")));
    }
    let (value, flags) = dudley_sum(v_minus_profile, n, |pre, v| (1.0 / r).min(pre / v))?;
    Ok(BoundValue::new(value, "dudley_mean_norm", &[("r", r), ("n", n as f64)]).flagged(flags))
}

/// Mirror estimate of the mean width for `K ⊆ R·B`:
/// `(1/√n)·Σ_k k^{−1/2}·min(R, (n/k)log(e+n/k)·w_k)`.
pub fn dudley_mean_width(
    w_profile: &ProfileCurve,
    big_r: f64,
    n: usize,
) -> Result<BoundValue, GeomError> {
    if !(big_r.is_finite() && big_r > 0.0) {
        return Err(GeomError::InvalidParameter(format!(
            "out-radius must be positive, got {big_r}"
        )));
    }
    let (value, flags) = dudley_sum(w_profile, n, |pre, w| big_r.min(pre * w))?;
    Ok(BoundValue::new(value, "dudley_mean_width", &[("R", big_r), ("n", n as f64)])
        .flagged(flags))
}

fn gelfand_shape(
    profile_value: f64,
    k: usize,
    n: usize,
    id: &'static str,
    param: &'static str,
) -> Result<BoundValue, GeomError> {
    if k == 0 || 2 * k > n {
        return Err(GeomError::InvalidParameter(format!("need 1 <= k <= n/2, got k={k}, n={n}")));
    }
    if !(profile_value.is_finite() && profile_value >= 0.0) {
        return Err(GeomError::InvalidParameter(format!(
            "profile value must be nonnegative, got {profile_value}"
        )));
    }
    let ratio = n as f64 / k as f64;
    Ok(BoundValue::new(
        ratio * log_e(ratio) * profile_value,
        id,
        &[(param, profile_value), ("k", k as f64), ("n", n as f64)],
    ))
}

/// Low-codimension section-radius shape `(n/k)·log(e+n/k)·w_k`.
pub fn gelfand_from_sections(w_k: f64, k: usize, n: usize) -> Result<BoundValue, GeomError> {
    gelfand_shape(w_k, k, n, "gelfand_from_sections", "w_k")
}

/// Same shape fed by the projection profile `v_k`.
pub fn gelfand_from_projections(v_k: f64, k: usize, n: usize) -> Result<BoundValue, GeomError> {
    gelfand_shape(v_k, k, n, "gelfand_from_projections", "v_k")
}

/// Section-radius shape for moment bodies:
/// `min(1, (n/k)·log(e+n/k)/min(√q, k^{1/4}))`.
pub fn zq_section_radius(n: usize, k: usize, q: f64) -> Result<BoundValue, GeomError> {
    check_range(k, n)?;
    if !(q >= 2.0) {
        return Err(GeomError::InvalidParameter(format!("need q >= 2, got {q}")));
    }
    let ratio = n as f64 / k as f64;
    let denom = q.sqrt().min((k as f64).powf(0.25));
    let value = (ratio * log_e(ratio) / denom).min(1.0);
    Ok(BoundValue::new(
        value,
        "zq_section_radius",
        &[("n", n as f64), ("k", k as f64), ("q", q)],
    ))
}

/// Decay shape `√(log q)/q^{1/4}` of the mean norm of a moment body,
/// flagged when `q` exceeds the regime `q ≤ (n·log(e+n))^{2/5}` where the
/// shape is backed.
pub fn m_zq_shape(n: usize, q: f64) -> Result<BoundValue, GeomError> {
    if n == 0 {
        return Err(GeomError::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(q >= 2.0) {
        return Err(GeomError::InvalidParameter(format!("need q >= 2, got {q}")));
    }
    let q0 = (n as f64 * log_e(n as f64)).powf(0.4);
    let value = q.ln().sqrt() / q.powf(0.25);
    let mut out =
        BoundValue::new(value, "m_zq_shape", &[("n", n as f64), ("q", q), ("q0", q0)]);
    if q > q0 {
        out.flags.push("beyond_valid_q_range".to_string());
    }
    Ok(out)
}

/// The two-block sum behind [`m_zq_shape`], evaluated literally with the
/// split at `k₀ = n·log(q)/√q` (never below one leading term):
/// `(1/√n)·[Σ_{k≤k₀} k^{−1/2} + Σ_{k>k₀} (n/√q)·k^{−3/2}·log(e+n/k)]`.
/// Returns the sum alongside the closed shape so callers can compare.
pub fn m_zq_sum_split(n: usize, q: f64) -> Result<(BoundValue, BoundValue), GeomError> {
    let closed = m_zq_shape(n, q)?;
    let split = ((n as f64) * q.ln() / q.sqrt()).floor().max(1.0) as usize;
    let cut = split.min(n);
    let mut sum = 0.0;
    for k in 1..=cut {
        sum += 1.0 / (k as f64).sqrt();
    }
    for k in cut + 1..=n {
        let kf = k as f64;
        sum += (n as f64 / q.sqrt()) * kf.powf(-1.5) * log_e(n as f64 / kf);
    }
    let value = sum / (n as f64).sqrt();
    let two_block = BoundValue::new(
        value,
        "m_zq_sum_split",
        &[("n", n as f64), ("q", q), ("split", cut as f64)],
    );
    Ok((two_block, closed))
}

/// Mean-norm shape for isotropic positions: `log^{2/5}(e+n)/n^{1/10}` (the
/// isotropic-constant factor is the caller's).
pub fn m_isotropic_shape(n: usize) -> Result<BoundValue, GeomError> {
    if n == 0 {
        return Err(GeomError::InvalidParameter("dimension must be >= 1".into()));
    }
    let value = log_e(n as f64).powf(0.4) / (n as f64).powf(0.1);
    Ok(BoundValue::new(value, "m_isotropic_shape", &[("n", n as f64)]))
}

/// Section-radius shape under a bounded isotropic constant:
/// `min(1, (n/k)·log(e+n/k)/√min(q,k))`.
pub fn zq_section_radius_conditional(
    n: usize,
    k: usize,
    q: f64,
) -> Result<BoundValue, GeomError> {
    check_range(k, n)?;
    if !(q >= 2.0) {
        return Err(GeomError::InvalidParameter(format!("need q >= 2, got {q}")));
    }
    let ratio = n as f64 / k as f64;
    let value = (ratio * log_e(ratio) / q.min(k as f64).sqrt()).min(1.0);
    Ok(BoundValue::new(
        value,
        "zq_section_radius_conditional",
        &[("n", n as f64), ("k", k as f64), ("q", q)],
    ))
}

/// Section-radius shape under a moment-growth constant `b_α`:
/// `min(1, (n/k)·log(e+n/k)/√min(q, k^{α/2}/b_α^α))`, flagged against the
/// extended validity range `q ≤ (n·log(e+n))^{2α/(α+4)}/b_α^{4α/(α+4)}`.
pub fn zq_section_radius_psi(
    n: usize,
    k: usize,
    q: f64,
    alpha: f64,
    b_alpha: f64,
) -> Result<BoundValue, GeomError> {
    check_range(k, n)?;
    if !(q >= 2.0) {
        return Err(GeomError::InvalidParameter(format!("need q >= 2, got {q}")));
    }
    if !(1.0..=2.0).contains(&alpha) {
        return Err(GeomError::InvalidParameter(format!(
            "moment-growth exponent must lie in [1, 2], got {alpha}"
        )));
    }
    if !(b_alpha.is_finite() && b_alpha > 0.0) {
        return Err(GeomError::InvalidParameter(format!(
            "growth constant must be positive, got {b_alpha}"
        )));
    }
    let ratio = n as f64 / k as f64;
    let cap = (k as f64).powf(alpha / 2.0) / b_alpha.powf(alpha);
    let value = (ratio * log_e(ratio) / q.min(cap).sqrt()).min(1.0);
    let q0 = (n as f64 * log_e(n as f64)).powf(2.0 * alpha / (alpha + 4.0))
        / b_alpha.powf(4.0 * alpha / (alpha + 4.0));
    let mut out = BoundValue::new(
        value,
        "zq_section_radius_psi",
        &[("n", n as f64), ("k", k as f64), ("q", q), ("alpha", alpha), ("b_alpha", b_alpha), ("q0", q0)],
    );
    if q > q0 {
        out.flags.push("beyond_valid_q_range".to_string());
    }
    Ok(out)
}

/// Diameter-from-width shape `√(n/k)·m_star`.
pub fn low_mstar(n: usize, k: usize, m_star: f64) -> Result<BoundValue, GeomError> {
    check_range(k, n)?;
    if !(m_star.is_finite() && m_star > 0.0) {
        return Err(GeomError::InvalidParameter(format!(
            "mean width must be positive, got {m_star}"
        )));
    }
    let value = (n as f64 / k as f64).sqrt() * m_star;
    Ok(BoundValue::new(value, "low_mstar", &[("n", n as f64), ("k", k as f64), ("m_star", m_star)]))
}

/// Reverse entropy-to-width shape
/// `log(e+n/k)·sup_{k ≤ m ≤ n} √m·e_m/√k` from an entropy-number profile.
pub fn converse_carl(
    e_profile: &ProfileCurve,
    k: usize,
    n: usize,
) -> Result<BoundValue, GeomError> {
    check_range(k, n)?;
    let pts = e_profile.values();
    if pts[pts.len() - 1].0 < k as f64 {
        return Err(GeomError::InvalidParameter(format!(
            "entropy profile ends at index {} but the tail from {k} is needed",
            pts[pts.len() - 1].0
        )));
    }
    let (vals, flags) = complete_profile(e_profile, k, n)?;
    let mut sup = f64::NEG_INFINITY;
    for (i, e_m) in vals.iter().enumerate() {
        sup = sup.max(((k + i) as f64).sqrt() * e_m);
    }
    let value = log_e(n as f64 / k as f64) * sup / (k as f64).sqrt();
    Ok(BoundValue::new(value, "converse_carl", &[("k", k as f64), ("n", n as f64)])
        .flagged(flags))
}

/// A formula as the CLI sees it: its identifier and named parameters.
/// `vector` parameters take a JSON array (a profile indexed from 1, or the
/// semiaxes list); everything else is a scalar.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FormulaInfo {
    pub id: &'static str,
    pub scalar_params: &'static [&'static str],
    pub vector_params: &'static [&'static str],
}

pub const REGISTRY: &[FormulaInfo] = &[
    FormulaInfo { id: "ellipsoid_entropy", scalar_params: &["j"], vector_params: &["semiaxes"] },
    FormulaInfo {
        id: "covering_from_widths",
        scalar_params: &["k", "n"],
        vector_params: &["profile"],
    },
    FormulaInfo { id: "dudley_mean_norm", scalar_params: &["r", "n"], vector_params: &["profile"] },
    FormulaInfo {
        id: "dudley_mean_width",
        scalar_params: &["R", "n"],
        vector_params: &["profile"],
    },
    FormulaInfo { id: "gelfand_from_sections", scalar_params: &["w_k", "k", "n"], vector_params: &[] },
    FormulaInfo {
        id: "gelfand_from_projections",
        scalar_params: &["v_k", "k", "n"],
        vector_params: &[],
    },
    FormulaInfo { id: "zq_section_radius", scalar_params: &["n", "k", "q"], vector_params: &[] },
    FormulaInfo { id: "m_zq_shape", scalar_params: &["n", "q"], vector_params: &[] },
    FormulaInfo { id: "m_zq_sum_split", scalar_params: &["n", "q"], vector_params: &[] },
    FormulaInfo { id: "m_isotropic_shape", scalar_params: &["n"], vector_params: &[] },
    FormulaInfo {
        id: "zq_section_radius_conditional",
        scalar_params: &["n", "k", "q"],
        vector_params: &[],
    },
    FormulaInfo {
        id: "zq_section_radius_psi",
        scalar_params: &["n", "k", "q", "alpha", "b_alpha"],
        vector_params: &[],
    },
    FormulaInfo { id: "low_mstar", scalar_params: &["n", "k", "m_star"], vector_params: &[] },
    FormulaInfo { id: "converse_carl", scalar_params: &["k", "n"], vector_params: &["profile"] },
];

/// One argument bundle for [`evaluate`].
#[derive(Clone, Debug)]
pub enum ArgValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

fn scalar(args: &BTreeMap<String, ArgValue>, name: &str, id: &str) -> Result<f64, GeomError> {
    match args.get(name) {
        Some(ArgValue::Scalar(v)) => Ok(*v),
        Some(ArgValue::Vector(_)) => Err(GeomError::InvalidConfig(format!(
            "formula {id}: parameter {name} must be a scalar"
        ))),
        None => Err(GeomError::InvalidConfig(format!("formula {id}: missing parameter {name}"))),
    }
}

fn vector(
    args: &BTreeMap<String, ArgValue>,
    name: &str,
    id: &str,
) -> Result<Vec<f64>, GeomError> {
    match args.get(name) {
        Some(ArgValue::Vector(v)) => Ok(v.clone()),
        Some(ArgValue::Scalar(_)) => Err(GeomError::InvalidConfig(format!(
            "formula {id}: parameter {name} must be an array"
        ))),
        None => Err(GeomError::InvalidConfig(format!("formula {id}: missing parameter {name}"))),
    }
}

fn as_dim(v: f64, name: &str, id: &str) -> Result<usize, GeomError> {
    if !(v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
        return Err(GeomError::InvalidConfig(format!(
            "formula {id}: parameter {name} must be a positive integer, got {v}"
        )));
    }
    Ok(v as usize)
}

fn profile_from(values: &[f64], what: &str) -> Result<ProfileCurve, GeomError> {
    use crate::functionals::{Bias, EstimateCI};
    let points = values
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64, EstimateCI::closed(*v, 0)))
        .collect();
    ProfileCurve::new("k", points, what, Bias::Unbiased)
}

/// Evaluate a registry formula by id; used by the sweep front end. The
/// two-valued sum-split formula reports its two-block sum and echoes the
/// closed shape.
pub fn evaluate(id: &str, args: &BTreeMap<String, ArgValue>) -> Result<BoundValue, GeomError> {
    match id {
        "ellipsoid_entropy" => {
            let axes = vector(args, "semiaxes", id)?;
            ellipsoid_entropy(&axes, as_dim(scalar(args, "j", id)?, "j", id)?)
        }
        "covering_from_widths" => {
            let profile = profile_from(&vector(args, "profile", id)?, id)?;
            covering_from_widths(
                &profile,
                as_dim(scalar(args, "k", id)?, "k", id)?,
                as_dim(scalar(args, "n", id)?, "n", id)?,
            )
        }
        "dudley_mean_norm" => {
            let profile = profile_from(&vector(args, "profile", id)?, id)?;
            dudley_mean_norm(
                &profile,
                scalar(args, "r", id)?,
                as_dim(scalar(args, "n", id)?, "n", id)?,
            )
        }
        "dudley_mean_width" => {
            let profile = profile_from(&vector(args, "profile", id)?, id)?;
            dudley_mean_width(
                &profile,
                scalar(args, "R", id)?,
                as_dim(scalar(args, "n", id)?, "n", id)?,
            )
        }
        "gelfand_from_sections" => gelfand_from_sections(
            scalar(args, "w_k", id)?,
            as_dim(scalar(args, "k", id)?, "k", id)?,
            as_dim(scalar(args, "n", id)?, "n", id)?,
        ),
        "gelfand_from_projections" => gelfand_from_projections(
            scalar(args, "v_k", id)?,
            as_dim(scalar(args, "k", id)?, "k", id)?,
            as_dim(scalar(args, "n", id)?, "n", id)?,
        ),
        "zq_section_radius" => zq_section_radius(
            as_dim(scalar(args, "n", id)?, "n", id)?,
            as_dim(scalar(args, "k", id)?, "k", id)?,
            scalar(args, "q", id)?,
        ),
        "m_zq_shape" => {
            m_zq_shape(as_dim(scalar(args, "n", id)?, "n", id)?, scalar(args, "q", id)?)
        }
        "m_zq_sum_split" => {
            let (mut two_block, closed) =
                m_zq_sum_split(as_dim(scalar(args, "n", id)?, "n", id)?, scalar(args, "q", id)?)?;
            two_block.inputs_digest.push_str(&format!(" closed_shape={}", closed.value));
            Ok(two_block)
        }
        "m_isotropic_shape" => m_isotropic_shape(as_dim(scalar(args, "n", id)?, "n", id)?),
        "zq_section_radius_conditional" => zq_section_radius_conditional(
            as_dim(scalar(args, "n", id)?, "n", id)?,
            as_dim(scalar(args, "k", id)?, "k", id)?,
            scalar(args, "q", id)?,
        ),
        "zq_section_radius_psi" => zq_section_radius_psi(
            as_dim(scalar(args, "n", id)?, "n", id)?,
            as_dim(scalar(args, "k", id)?, "k", id)?,
            scalar(args, "q", id)?,
            scalar(args, "alpha", id)?,
            scalar(args, "b_alpha", id)?,
        ),
        "low_mstar" => low_mstar(
            as_dim(scalar(args, "n", id)?, "n", id)?,
            as_dim(scalar(args, "k", id)?, "k", id)?,
            scalar(args, "m_star", id)?,
        ),
        "converse_carl" => {
            let profile = profile_from(&vector(args, "profile", id)?, id)?;
            converse_carl(
                &profile,
                as_dim(scalar(args, "k", id)?, "k", id)?,
                as_dim(scalar(args, "n", id)?, "n", id)?,
            )
        }
        other => {
            let known: Vec<&str> = REGISTRY.iter().map(|f| f.id).collect();
            Err(GeomError::InvalidConfig(format!(
                "unknown formula \"{other}\"; known: {}",
                known.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{Bias, EstimateCI};

    fn flat_profile(value: f64, upto: usize) -> ProfileCurve {
        let points =
            (1..=upto).map(|k| (k as f64, EstimateCI::closed(value, 0))).collect();
        ProfileCurve::new("k", points, "test", Bias::Unbiased).unwrap()
    }

    #[test]
    fn ellipsoid_entropy_hits_the_pinned_values() {
        assert_eq!(ellipsoid_entropy(&[1.0, 1.0, 1.0, 1.0], 4).unwrap().value, 0.5);
        assert_eq!(ellipsoid_entropy(&[4.0, 1.0, 1.0, 1.0], 2).unwrap().value, 1.0);
        // Single axis: a·2^{−j}, decreasing in j.
        let single: Vec<f64> = (1..8).map(|j| ellipsoid_entropy(&[3.0], j).unwrap().value).collect();
        assert!((single[0] - 1.5).abs() < 1e-15);
        assert!(single.windows(2).all(|w| w[1] < w[0]));
        assert!(ellipsoid_entropy(&[], 1).is_err());
        assert!(ellipsoid_entropy(&[1.0, -1.0], 1).is_err());
    }

    #[test]
    fn covering_shape_on_the_flat_ball_profile() {
        let w = flat_profile(1.0, 4);
        let b = covering_from_widths(&w, 4, 4).unwrap();
        assert!((b.value - 1.0423364921379799).abs() < 1e-12);
        assert!(b.flags.is_empty());
        let b1 = covering_from_widths(&flat_profile(1.0, 1), 1, 1).unwrap();
        assert!((b1.value - 1.0423364921379799).abs() < 1e-12);
        // Growing k with the same attained sup only shrinks the prefactor.
        let wide = flat_profile(1.0, 64);
        let vals: Vec<f64> =
            [8, 16, 32, 64].iter().map(|&k| covering_from_widths(&wide, k, 64).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn entropy_sums_match_the_hand_arithmetic() {
        let v = flat_profile(1.0, 4);
        let m = dudley_mean_norm(&v, 1.0, 4).unwrap();
        assert!((m.value - 1.3922285251880866).abs() < 1e-12);
        let m1 = dudley_mean_norm(&flat_profile(1.0, 1), 1.0, 1).unwrap();
        assert!((m1.value - 1.0).abs() < 1e-15);
        // Joint scaling (profile, r) → (2·profile, 2r) halves the sum.
        let half = dudley_mean_norm(&flat_profile(2.0, 4), 2.0, 4).unwrap();
        assert!((half.value - m.value / 2.0).abs() < 1e-15);

        let w = dudley_mean_width(&v, 1.0, 4).unwrap();
        assert!((w.value - 1.3922285251880866).abs() < 1e-12);
        let scaled = dudley_mean_width(&flat_profile(3.0, 4), 3.0, 4).unwrap();
        assert!((scaled.value - 3.0 * w.value).abs() < 1e-12);
    }

    #[test]
    fn gelfand_shapes_and_domains() {
        let b = gelfand_from_sections(1.0, 2, 4).unwrap();
        assert!((b.value - 3.1028894278641017).abs() < 1e-12);
        let p = gelfand_from_projections(4.0, 1, 4).unwrap();
        assert!((p.value - 30.477319064871168).abs() < 1e-12);
        // Degree 1 in the profile value.
        assert!((gelfand_from_sections(2.5, 2, 4).unwrap().value - 2.5 * b.value).abs() < 1e-12);
        assert!(gelfand_from_sections(1.0, 3, 4).is_err());
        assert!(gelfand_from_sections(1.0, 0, 4).is_err());
    }

    #[test]
    fn section_radius_values_and_monotonicity() {
        assert!((zq_section_radius(100, 100, 16.0).unwrap().value - 0.4152898096393903).abs()
            < 1e-12);
        assert!((zq_section_radius(100, 100, 2.0).unwrap().value - 0.9286162447166241).abs()
            < 1e-12);
        assert_eq!(zq_section_radius(100, 1, 2.0).unwrap().value, 1.0);
        for n in [64usize, 256] {
            let mut prev = f64::INFINITY;
            for q in [2.0, 4.0, 8.0, 16.0, 32.0] {
                let v = zq_section_radius(n, n, q).unwrap().value;
                assert!(v <= prev + 1e-15, "not non-increasing in q at {q}");
                prev = v;
            }
            let mut prev = f64::INFINITY;
            for k in [4usize, 8, 16, 32, 64] {
                let v = zq_section_radius(n, k, 16.0).unwrap().value;
                assert!(v <= prev + 1e-15, "not non-increasing in k at {k}");
                prev = v;
            }
        }
    }

    #[test]
    fn moment_decay_shape_and_validity_flag() {
        let b = m_zq_shape(10_000, 16.0).unwrap();
        assert!((b.value - 0.8325546111576977).abs() < 1e-12);
        assert!(b.flags.is_empty());
        assert!(b.inputs_digest.contains("q0=96.7643"));
        let far = m_zq_shape(10_000, 128.0).unwrap();
        assert_eq!(far.flags, vec!["beyond_valid_q_range".to_string()]);
        let e = m_zq_shape(4, std::f64::consts::E).unwrap();
        assert!((e.value - 0.7788007830714049).abs() < 1e-12);
        assert!(m_zq_shape(4, 1.0).is_err());
    }

    #[test]
    fn sum_split_stays_within_a_small_factor_of_the_closed_shape() {
        for (q, expect) in [(4.0, 1.925844), (16.0, 1.788177), (64.0, 1.565006)] {
            let (two_block, closed) = m_zq_sum_split(10_000, q).unwrap();
            assert!((two_block.value - expect).abs() < 1e-5, "q={q}: {}", two_block.value);
            let ratio = two_block.value / closed.value;
            assert!((0.25..4.0).contains(&ratio), "q={q}: ratio {ratio}");
        }
        // Decreasing along a log grid in q.
        let vals: Vec<f64> = [4.0, 16.0, 64.0, 256.0]
            .iter()
            .map(|&q| m_zq_sum_split(10_000, q).unwrap().0.value)
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(m_zq_sum_split(1, 4.0).unwrap().0.value, 1.0);
    }

    #[test]
    fn isotropic_shape_values() {
        assert!((m_isotropic_shape(1).unwrap().value - 1.1151685419641904).abs() < 1e-12);
        assert!((m_isotropic_shape(1024).unwrap().value - 1.084842316166993).abs() < 1e-12);
        let far: Vec<f64> = [1_000_000usize, 2_000_000, 4_000_000]
            .iter()
            .map(|&n| m_isotropic_shape(n).unwrap().value)
            .collect();
        assert!(far.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn conditional_and_growth_variants_agree_where_they_should() {
        // α=1, b=1 caps at √k, the conditional variant at k: they agree
        // once q is below both.
        let a = zq_section_radius_psi(64, 16, 2.0, 1.0, 1.0).unwrap();
        let c = zq_section_radius_conditional(64, 16, 2.0).unwrap();
        assert_eq!(a.value, c.value);
        // α=2, b=1, k ≥ q: the growth cap k^{1}/1 exceeds q, so √q rules.
        let g = zq_section_radius_psi(64, 16, 16.0, 2.0, 1.0).unwrap();
        assert_eq!(g.value, 1.0);
        assert!(zq_section_radius_psi(64, 16, 4.0, 0.5, 1.0).is_err());
        assert!(zq_section_radius_psi(64, 16, 4.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn low_mstar_and_converse_carl() {
        assert_eq!(low_mstar(16, 16, 0.73).unwrap().value, 0.73);
        assert!((low_mstar(16, 4, 1.0).unwrap().value - 2.0).abs() < 1e-15);

        let e = flat_profile(1.0, 4);
        let c = converse_carl(&e, 1, 4).unwrap();
        assert!((c.value - 3.809664883108896).abs() < 1e-12);
        // Ball-like decaying profile, k = n: sup at the last index.
        let pts = (1..=4)
            .map(|m| (m as f64, EstimateCI::closed((-(m as f64) / 4.0).exp2(), 0)))
            .collect();
        let decay = ProfileCurve::new("k", pts, "test", Bias::Unbiased).unwrap();
        let tail = converse_carl(&decay, 4, 4).unwrap();
        assert!((tail.value - 0.6566308437591114).abs() < 1e-12);
        // A profile that stops before k has no usable tail.
        assert!(converse_carl(&flat_profile(1.0, 2), 3, 8).is_err());
    }

    #[test]
    fn sparse_profiles_interpolate_monotonically_and_flag_it() {
        // Knots at 1, 4, 9: strictly decreasing values.
        let pts = vec![
            (1.0, EstimateCI::closed(4.0, 0)),
            (4.0, EstimateCI::closed(2.0, 0)),
            (9.0, EstimateCI::closed(1.0, 0)),
        ];
        let sparse = ProfileCurve::new("k", pts, "test", Bias::Unbiased).unwrap();
        let (vals, flags) = complete_profile(&sparse, 1, 10).unwrap();
        assert_eq!(vals[0], 4.0);
        assert_eq!(vals[3], 2.0);
        assert_eq!(vals[8], 1.0);
        // Monotone between knots, clamped beyond the last one.
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{vals:?}");
        assert_eq!(vals[9], 1.0);
        assert!(flags.contains(&"interpolated".to_string()));
        assert!(flags.contains(&"extrapolated".to_string()));

        // Dense profiles pass through untouched.
        let (_, dense_flags) = complete_profile(&flat_profile(1.0, 6), 1, 6).unwrap();
        assert!(dense_flags.is_empty());
    }

    #[test]
    fn registry_evaluates_by_id_and_rejects_unknowns() {
        let mut args = BTreeMap::new();
        args.insert("n".to_string(), ArgValue::Scalar(10_000.0));
        args.insert("q".to_string(), ArgValue::Scalar(16.0));
        let b = evaluate("m_zq_shape", &args).unwrap();
        assert!((b.value - 0.8325546111576977).abs() < 1e-12);
        let s = evaluate("m_zq_sum_split", &args).unwrap();
        assert!(s.inputs_digest.contains("closed_shape="));

        let mut args = BTreeMap::new();
        args.insert("semiaxes".to_string(), ArgValue::Vector(vec![4.0, 1.0, 1.0, 1.0]));
        args.insert("j".to_string(), ArgValue::Scalar(2.0));
        assert_eq!(evaluate("ellipsoid_entropy", &args).unwrap().value, 1.0);

        let mut args = BTreeMap::new();
        args.insert("profile".to_string(), ArgValue::Vector(vec![1.0; 4]));
        args.insert("r".to_string(), ArgValue::Scalar(1.0));
        args.insert("n".to_string(), ArgValue::Scalar(4.0));
        let d = evaluate("dudley_mean_norm", &args).unwrap();
        assert!((d.value - 1.3922285251880866).abs() < 1e-12);

        let err = evaluate("no_such_formula", &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("m_zq_shape"));
        assert_eq!(REGISTRY.len(), 14);
    }
}
