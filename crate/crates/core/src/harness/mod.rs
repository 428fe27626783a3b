//! Experiment runner: binds measured functionals to bound evaluators,
//! performs witness searches and scaling-law regressions, and emits one
//! structured record per grid point.
//!
//! Verdict semantics; the decision boundary is always written so that a
//! positive margin means the claim holds:
//! * `pass`/`fail` need the margin clear of the boundary by `ci_sigma`
//!   standard errors (closed forms have zero error, so exact equality on
//!   the good side passes);
//! * anything straddling the boundary is `inconclusive`;
//! * when a one-sided comparison uses an estimate whose bias direction
//!   could have manufactured the verdict, the verdict degrades to
//!   `inconclusive` rather than being claimed.
//!
//! Constant-free inequalities are reported through a fitted constant (the
//! extremal measured/bound ratio); their pass criterion is that the fit is
//! finite and stable across the upper half of the grid, plus any slope
//! prediction within its stated slack.
//!
//! Grid points run concurrently, each on a stream derived from
//! (seed, experiment id, grid index); records are assembled in grid order,
//! so reports are byte-identical across worker counts.

mod checks;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::schema::BodySpec;
use crate::bodies::Body;
use crate::bounds::BoundValue;
use crate::error::GeomError;
use crate::functionals::{Bias, EstimateCI, Method};
use crate::measures::{LogConcaveMeasure, MeasureSpec};
use crate::sampling::RngStream;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Sandwich,
    Santalo,
    VkMonotone,
    ZqInclusions,
    ZnEquiv,
    ZqVradScaling,
    MZqScaling,
    ProjectionWitness,
    CoveringProfile,
    ZqProjectionProfile,
    PsiAlphaSuite,
    ConditionalSuite,
    LowMstarCrosscheck,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Sandwich => "sandwich",
            CheckKind::Santalo => "santalo",
            CheckKind::VkMonotone => "vk_monotone",
            CheckKind::ZqInclusions => "zq_inclusions",
            CheckKind::ZnEquiv => "zn_equiv",
            CheckKind::ZqVradScaling => "zq_vrad_scaling",
            CheckKind::MZqScaling => "m_zq_scaling",
            CheckKind::ProjectionWitness => "projection_witness",
            CheckKind::CoveringProfile => "covering_profile",
            CheckKind::ZqProjectionProfile => "zq_projection_profile",
            CheckKind::PsiAlphaSuite => "psi_alpha_suite",
            CheckKind::ConditionalSuite => "conditional_suite",
            CheckKind::LowMstarCrosscheck => "low_mstar_crosscheck",
        }
    }

    fn takes_body(self) -> bool {
        matches!(
            self,
            CheckKind::Sandwich
                | CheckKind::Santalo
                | CheckKind::VkMonotone
                | CheckKind::ZnEquiv
                | CheckKind::ProjectionWitness
                | CheckKind::CoveringProfile
                | CheckKind::LowMstarCrosscheck
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

fn default_sphere() -> u64 {
    100_000
}
fn default_measure() -> u64 {
    16_384
}
fn default_trials() -> u64 {
    32
}
fn default_dirs() -> u64 {
    50
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    #[serde(default = "default_sphere")]
    pub sphere_samples: u64,
    #[serde(default = "default_measure")]
    pub measure_samples: u64,
    #[serde(default = "default_trials")]
    pub subspace_trials: u64,
    #[serde(default = "default_dirs")]
    pub dirs: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            sphere_samples: default_sphere(),
            measure_samples: default_measure(),
            subspace_trials: default_trials(),
            dirs: default_dirs(),
        }
    }
}

fn default_ci_sigma() -> f64 {
    crate::tol::CI_SIGMA
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancePolicy {
    #[serde(default = "default_ci_sigma")]
    pub ci_sigma: f64,
    /// Inclusive grid range used for slope fits; whole grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy { ci_sigma: default_ci_sigma(), fit_window: None }
    }
}

/// One experiment: a check, a subject, grids, budgets, and a seed.
/// Multi-dimension suites are lists of experiments (the subject spec pins
/// the dimension, so there is no separate n grid).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub check: CheckKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub budgets: Budgets,
    pub seed: u64,
    #[serde(default)]
    pub tolerance_policy: TolerancePolicy,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), GeomError> {
        let id = &self.experiment_id;
        if id.is_empty() {
            return Err(GeomError::InvalidConfig("experiment_id must be nonempty".into()));
        }
        match (self.check.takes_body(), &self.body, &self.measure) {
            (true, Some(_), None) | (false, None, Some(_)) => {}
            (true, _, _) => {
                return Err(GeomError::InvalidConfig(format!(
                    "{id}: check {} takes a body subject (and only that)",
                    self.check.name()
                )));
            }
            (false, _, _) => {
                return Err(GeomError::InvalidConfig(format!(
                    "{id}: check {} takes a measure subject (and only that)",
                    self.check.name()
                )));
            }
        }
        if self.k_list.windows(2).any(|w| w[0] >= w[1]) || self.k_list.first() == Some(&0) {
            return Err(GeomError::InvalidConfig(format!(
                "{id}: k_list must be strictly increasing and positive"
            )));
        }
        if self.q_list.windows(2).any(|w| w[0] >= w[1])
            || self.q_list.iter().any(|q| !(q.is_finite() && *q >= 1.0))
        {
            return Err(GeomError::InvalidConfig(format!(
                "{id}: q_list must be strictly increasing with entries >= 1"
            )));
        }
        let b = &self.budgets;
        if b.sphere_samples == 0 || b.measure_samples == 0 || b.subspace_trials == 0 || b.dirs == 0
        {
            return Err(GeomError::InvalidConfig(format!("{id}: budgets must be positive")));
        }
        if !(self.tolerance_policy.ci_sigma > 0.0) {
            return Err(GeomError::InvalidConfig(format!("{id}: ci_sigma must be positive")));
        }
        let needs_k = matches!(
            self.check,
            CheckKind::VkMonotone
                | CheckKind::ProjectionWitness
                | CheckKind::CoveringProfile
                | CheckKind::ZqProjectionProfile
                | CheckKind::LowMstarCrosscheck
        );
        if needs_k && self.k_list.is_empty() {
            return Err(GeomError::InvalidConfig(format!(
                "{id}: check {} needs k_list",
                self.check.name()
            )));
        }
        let needs_q = matches!(
            self.check,
            CheckKind::ZqInclusions
                | CheckKind::ZqVradScaling
                | CheckKind::MZqScaling
                | CheckKind::ZqProjectionProfile
                | CheckKind::PsiAlphaSuite
        );
        if needs_q && self.q_list.is_empty() {
            return Err(GeomError::InvalidConfig(format!(
                "{id}: check {} needs q_list",
                self.check.name()
            )));
        }
        if self.check == CheckKind::ZqInclusions && self.q_list.len() < 2 {
            return Err(GeomError::InvalidConfig(format!(
                "{id}: zq_inclusions pairs consecutive q_list entries; need at least two"
            )));
        }
        if self.check == CheckKind::PsiAlphaSuite {
            match self.alpha {
                Some(a) if (1.0..=2.0).contains(&a) => {}
                _ => {
                    return Err(GeomError::InvalidConfig(format!(
                        "{id}: psi_alpha_suite needs alpha in [1, 2]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn subject_digest(&self) -> String {
        match (&self.body, &self.measure) {
            (Some(b), _) => b.digest(),
            (_, Some(m)) => m.digest(),
            _ => "unbuilt".into(),
        }
    }
}

/// The comparison side of a record: a formula evaluation or a reference
/// estimate measured alongside.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum BoundSide {
    Formula(BoundValue),
    Reference(EstimateCI),
}

impl BoundSide {
    pub fn value(&self) -> f64 {
        match self {
            BoundSide::Formula(b) => b.value,
            BoundSide::Reference(e) => e.value,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportRecord {
    pub schema_version: u32,
    pub experiment_id: String,
    pub check: CheckKind,
    pub subject_digest: String,
    pub grid_point: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<EstimateCI>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSide>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_constant: Option<f64>,
    pub verdict: Verdict,
    pub note: String,
    pub seed: u64,
    pub runtime_ms: u64,
}

/// A record before the experiment envelope is stamped on.
pub(crate) struct Rec {
    pub grid_point: String,
    pub measured: Option<EstimateCI>,
    pub bound: Option<BoundSide>,
    pub fitted_constant: Option<f64>,
    pub verdict: Verdict,
    pub note: String,
    pub runtime_ms: u64,
}

impl Rec {
    pub fn new(grid_point: impl Into<String>) -> Rec {
        Rec {
            grid_point: grid_point.into(),
            measured: None,
            bound: None,
            fitted_constant: None,
            verdict: Verdict::Inconclusive,
            note: String::new(),
            runtime_ms: 0,
        }
    }

    pub fn error(grid_point: impl Into<String>, err: &GeomError) -> Rec {
        let mut r = Rec::new(grid_point);
        r.note = format!("error: {err}");
        r
    }
}

pub(crate) enum Subject {
    Body(Body),
    Measure(LogConcaveMeasure),
}

impl Subject {
    pub fn body(&self) -> &Body {
        match self {
            Subject::Body(b) => b,
            Subject::Measure(_) => unreachable!("validated: body check"),
        }
    }

    pub fn measure(&self) -> &LogConcaveMeasure {
        match self {
            Subject::Measure(m) => m,
            Subject::Body(_) => unreachable!("validated: measure check"),
        }
    }
}

/// Grid labels used when the subject cannot be built, so every configured
/// grid point still surfaces a record.
fn error_grid(cfg: &ExperimentConfig) -> Vec<String> {
    let mut labels = Vec::new();
    match cfg.check {
        CheckKind::Sandwich => {
            labels.push("side=lower".into());
            labels.push("side=upper".into());
        }
        CheckKind::Santalo => labels.push("product".into()),
        CheckKind::ZnEquiv => {
            labels.extend(["inclusion", "equivalence", "m_ratio"].map(String::from));
        }
        CheckKind::VkMonotone
        | CheckKind::ProjectionWitness
        | CheckKind::CoveringProfile
        | CheckKind::LowMstarCrosscheck => {
            labels.extend(cfg.k_list.iter().map(|k| format!("k={k}")));
        }
        CheckKind::ZqInclusions => {
            labels.extend(
                cfg.q_list.windows(2).map(|w| format!("p={} q={}", w[0], w[1])),
            );
        }
        CheckKind::ZqVradScaling | CheckKind::MZqScaling => {
            labels.extend(cfg.q_list.iter().map(|q| format!("q={q}")));
        }
        CheckKind::ZqProjectionProfile => {
            for q in &cfg.q_list {
                labels.extend(cfg.k_list.iter().map(move |k| format!("q={q} k={k}")));
            }
        }
        CheckKind::PsiAlphaSuite | CheckKind::ConditionalSuite => labels.push("subject".into()),
    }
    if labels.is_empty() {
        labels.push("subject".into());
    }
    labels
}

/// Run one experiment. Subject construction failures surface as one
/// inconclusive record per grid point; config-shape problems are errors.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>, GeomError> {
    cfg.validate()?;
    let stream = RngStream::new(cfg.seed, 0).derive(&cfg.experiment_id);
    let subject = if cfg.check.takes_body() {
        cfg.body.as_ref().unwrap().build().map(Subject::Body)
    } else {
        cfg.measure.as_ref().unwrap().build().map(Subject::Measure)
    };
    let recs = match subject {
        Err(e) => error_grid(cfg).into_iter().map(|g| Rec::error(g, &e)).collect(),
        Ok(subject) => {
            let ctx = checks::Ctx { cfg, subject: &subject, stream };
            match cfg.check {
                CheckKind::Sandwich => checks::sandwich(&ctx)?,
                CheckKind::Santalo => checks::santalo(&ctx)?,
                CheckKind::VkMonotone => checks::vk_monotone(&ctx)?,
                CheckKind::ZqInclusions => checks::zq_inclusions(&ctx)?,
                CheckKind::ZnEquiv => checks::zn_equiv(&ctx)?,
                CheckKind::ZqVradScaling => checks::zq_vrad_scaling(&ctx)?,
                CheckKind::MZqScaling => checks::m_zq_scaling(&ctx)?,
                CheckKind::ProjectionWitness => checks::projection_witness(&ctx)?,
                CheckKind::CoveringProfile => checks::covering_profile(&ctx)?,
                CheckKind::ZqProjectionProfile => checks::zq_projection_profile(&ctx)?,
                CheckKind::PsiAlphaSuite => checks::psi_alpha_suite(&ctx)?,
                CheckKind::ConditionalSuite => checks::conditional_suite(&ctx)?,
                CheckKind::LowMstarCrosscheck => checks::low_mstar_crosscheck(&ctx)?,
            }
        }
    };
    let digest = cfg.subject_digest();
    Ok(recs
        .into_iter()
        .map(|r| ReportRecord {
            schema_version: SCHEMA_VERSION,
            experiment_id: cfg.experiment_id.clone(),
            check: cfg.check,
            subject_digest: digest.clone(),
            grid_point: r.grid_point,
            measured: r.measured,
            bound: r.bound,
            fitted_constant: r.fitted_constant,
            verdict: r.verdict,
            note: r.note,
            seed: cfg.seed,
            runtime_ms: r.runtime_ms,
        })
        .collect())
}

/// Run a suite; per-experiment failures become inconclusive records rather
/// than aborting later experiments.
pub fn run_suite(configs: &[ExperimentConfig]) -> Result<Vec<ReportRecord>, GeomError> {
    for cfg in configs {
        cfg.validate()?;
    }
    let per: Vec<Vec<ReportRecord>> =
        configs.par_iter().map(|cfg| run(cfg)).collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Margin-vs-noise verdict: a positive margin means the claim holds.
pub(crate) fn decide(margin: f64, sigma: f64, ci_sigma: f64) -> Verdict {
    if !margin.is_finite() || !sigma.is_finite() {
        return Verdict::Inconclusive;
    }
    if margin < -ci_sigma * sigma {
        Verdict::Fail
    } else if margin >= ci_sigma * sigma {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

/// Degrade a one-sided verdict that the input's bias direction could have
/// manufactured. `measured_must_stay_below` states the claim's direction.
pub(crate) fn guard_one_sided(v: Verdict, bias: Bias, measured_must_stay_below: bool) -> Verdict {
    let risky = match (v, bias) {
        (Verdict::Pass, Bias::LowerBiased) => measured_must_stay_below,
        (Verdict::Fail, Bias::UpperBiased) => measured_must_stay_below,
        (Verdict::Pass, Bias::UpperBiased) => !measured_must_stay_below,
        (Verdict::Fail, Bias::LowerBiased) => !measured_must_stay_below,
        _ => false,
    };
    if risky {
        Verdict::Inconclusive
    } else {
        v
    }
}

/// Estimate carrying propagated error: closed when the error is zero.
pub(crate) fn derived_est(value: f64, sigma: f64, n_samples: u64, seed: u64) -> EstimateCI {
    if sigma == 0.0 {
        EstimateCI::closed(value, seed)
    } else {
        EstimateCI::sampled(value, sigma, n_samples, seed, Method::MonteCarlo)
    }
}

pub(crate) fn recip_est(e: &EstimateCI) -> EstimateCI {
    derived_est(1.0 / e.value, e.std_err / (e.value * e.value), e.n_samples, e.seed)
}

pub(crate) fn product_est(a: &EstimateCI, b: &EstimateCI) -> EstimateCI {
    let v = a.value * b.value;
    let rel = (a.std_err / a.value).hypot(b.std_err / b.value);
    derived_est(v, v.abs() * rel, a.n_samples.min(b.n_samples), a.seed)
}

pub(crate) fn ratio_est(a: &EstimateCI, b: &EstimateCI) -> EstimateCI {
    let v = a.value / b.value;
    let rel = (a.std_err / a.value).hypot(b.std_err / b.value);
    derived_est(v, v.abs() * rel, a.n_samples.min(b.n_samples), a.seed)
}

pub(crate) struct SlopeFit {
    pub slope: f64,
    /// Data noise propagated through the least-squares weights; zero when
    /// every input is closed-form (log-log curvature is shape, not noise).
    pub se: f64,
    pub n_used: usize,
    pub all_closed: bool,
}

/// Least-squares slope of ln(value) against ln(x).
pub(crate) fn loglog_slope(points: &[(f64, EstimateCI)]) -> Option<SlopeFit> {
    let usable: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|(x, e)| *x > 0.0 && e.value > 0.0 && e.value.is_finite())
        .map(|(x, e)| (x.ln(), e.value.ln(), e.std_err / e.value))
        .collect();
    let m = usable.len();
    if m < 2 {
        return None;
    }
    let xbar = usable.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let ybar = usable.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx: f64 = usable.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let var: f64 = usable
        .iter()
        .map(|p| {
            let w = (p.0 - xbar) / sxx;
            w * w * p.2 * p.2
        })
        .sum();
    Some(SlopeFit {
        slope: sxy / sxx,
        se: var.sqrt(),
        n_used: m,
        all_closed: points.iter().all(|(_, e)| e.std_err == 0.0),
    })
}

/// Pool-adjacent-violators fit (means under a monotonicity constraint).
pub(crate) fn isotonic_fit(values: &[f64], increasing: bool) -> Vec<f64> {
    let signed: Vec<f64> = if increasing {
        values.to_vec()
    } else {
        values.iter().map(|v| -v).collect()
    };
    // Blocks of (mean, weight); merge while the tail decreases.
    let mut blocks: Vec<(f64, f64)> = Vec::with_capacity(signed.len());
    for &v in &signed {
        blocks.push((v, 1.0));
        while blocks.len() >= 2 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            blocks.pop();
            blocks.push(((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2));
        }
    }
    let mut out = Vec::with_capacity(signed.len());
    for (m, w) in blocks {
        for _ in 0..w as usize {
            out.push(if increasing { m } else { -m });
        }
    }
    out
}

pub(crate) fn elapsed_ms(t0: std::time::Instant) -> u64 {
    t0.elapsed().as_millis() as u64
}

/// In-window predicate for slope fits.
pub(crate) fn in_fit_window(x: f64, policy: &TolerancePolicy) -> bool {
    match policy.fit_window {
        Some((lo, hi)) => x >= lo - 1e-9 && x <= hi + 1e-9,
        None => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_respect_noise_and_equality() {
        assert_eq!(decide(0.0, 0.0, 3.0), Verdict::Pass);
        assert_eq!(decide(-1e-12, 0.0, 3.0), Verdict::Fail);
        assert_eq!(decide(0.05, 0.1, 3.0), Verdict::Inconclusive);
        assert_eq!(decide(0.5, 0.1, 3.0), Verdict::Pass);
        assert_eq!(decide(-0.5, 0.1, 3.0), Verdict::Fail);
        assert_eq!(decide(f64::NAN, 0.1, 3.0), Verdict::Inconclusive);
    }

    #[test]
    fn bias_guard_blocks_manufactured_verdicts() {
        use Bias::*;
        use Verdict::*;
        // measured <= bound: a low-reading estimate can fake a pass, a
        // high-reading one can fake a fail.
        assert_eq!(guard_one_sided(Pass, LowerBiased, true), Inconclusive);
        assert_eq!(guard_one_sided(Fail, UpperBiased, true), Inconclusive);
        assert_eq!(guard_one_sided(Pass, UpperBiased, true), Pass);
        assert_eq!(guard_one_sided(Fail, LowerBiased, true), Fail);
        // measured >= bound mirrors.
        assert_eq!(guard_one_sided(Pass, UpperBiased, false), Inconclusive);
        assert_eq!(guard_one_sided(Fail, LowerBiased, false), Inconclusive);
        assert_eq!(guard_one_sided(Pass, Unbiased, true), Pass);
    }

    #[test]
    fn isotonic_fit_pools_violators() {
        let fit = isotonic_fit(&[3.0, 1.0, 2.0, 0.5], false);
        assert!(fit.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert_eq!(fit[0], 3.0);
        assert!((fit[1] - 1.5).abs() < 1e-12 && (fit[2] - 1.5).abs() < 1e-12);
        let up = isotonic_fit(&[1.0, 3.0, 2.0], true);
        assert!(up.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!((up[1] - 2.5).abs() < 1e-12);
        // Already monotone data is untouched.
        assert_eq!(isotonic_fit(&[5.0, 4.0, 1.0], false), vec![5.0, 4.0, 1.0]);
    }

    #[test]
    fn loglog_slope_recovers_power_laws() {
        let pts: Vec<(f64, EstimateCI)> = [2.0f64, 4.0, 8.0, 16.0]
            .iter()
            .map(|&q| (q, EstimateCI::closed(3.0 * q.sqrt(), 0)))
            .collect();
        let fit = loglog_slope(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert_eq!(fit.se, 0.0);
        assert!(fit.all_closed);

        let noisy: Vec<(f64, EstimateCI)> = pts
            .iter()
            .map(|(q, e)| {
                (*q, EstimateCI::sampled(e.value, 0.01 * e.value, 100, 0, Method::MonteCarlo))
            })
            .collect();
        let nf = loglog_slope(&noisy).unwrap();
        assert!(nf.se > 0.0 && !nf.all_closed);
        assert!(loglog_slope(&pts[..1]).is_none());
    }

    #[test]
    fn config_validation_rejects_malformed_experiments() {
        let good: ExperimentConfig = serde_json::from_str(
            r#"{
                "experiment_id": "s1",
                "check": "sandwich",
                "body": {"variant": "euclidean_ball", "dim": 3, "params": {"radius": 1.0}},
                "seed": 7
            }"#,
        )
        .unwrap();
        good.validate().unwrap();
        assert_eq!(good.budgets.sphere_samples, 100_000);
        assert_eq!(good.tolerance_policy.ci_sigma, crate::tol::CI_SIGMA);

        // Body check with a measure subject.
        let mut bad = good.clone();
        bad.body = None;
        assert!(bad.validate().is_err());

        // Unsorted grid.
        let mut bad = good.clone();
        bad.check = CheckKind::VkMonotone;
        bad.k_list = vec![2, 2];
        assert!(bad.validate().is_err());

        // Unknown check names never parse.
        assert!(serde_json::from_str::<CheckKind>("\"thm42_witness\"").is_err());
        // Names round-trip through serde exactly as `name()` spells them.
        for check in [
            CheckKind::MZqScaling,
            CheckKind::ZqProjectionProfile,
            CheckKind::Sandwich,
            CheckKind::LowMstarCrosscheck,
        ] {
            let json = serde_json::to_string(&check).unwrap();
            assert_eq!(json, format!("\"{}\"", check.name()));
        }
    }

    #[test]
    fn subject_failures_surface_per_grid_point() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{
                "experiment_id": "bad-subject",
                "check": "vk_monotone",
                "body": {"variant": "euclidean_ball", "dim": 3, "params": {"radius": -1.0}},
                "k_list": [1, 2, 3],
                "seed": 7
            }"#,
        )
        .unwrap();
        let records = run(&cfg).unwrap();
        assert_eq!(records.len(), 3);
        for (r, k) in records.iter().zip(1..) {
            assert_eq!(r.verdict, Verdict::Inconclusive);
            assert_eq!(r.grid_point, format!("k={k}"));
            assert!(r.note.starts_with("error: "));
            assert_eq!(r.schema_version, SCHEMA_VERSION);
        }
    }
}
