//! Centralized tolerances and budget caps.
//!
//! Every threshold used by the oracles, estimators, and harness verdicts is
//! named here so tests and checks agree on one source of truth.

/// Agreement expected from closed-form arithmetic (relative).
pub const CLOSED_FORM_REL: f64 = 1e-12;

/// Accuracy contract of the LP-backed polytope oracles (relative).
pub const LP_REL: f64 = 1e-9;

/// Accuracy contract of the complement-minimization convex program used for
/// projection gauges and section supports without a polytope route (relative).
pub const PROGRAM_REL: f64 = 1e-8;

/// Orthonormality defect allowed in a subspace basis.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Symmetry defect allowed in an ellipsoid shape matrix before rejection.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Relative rank cutoff for full-dimensionality checks on polytope data.
pub const RANK_REL: f64 = 1e-10;

/// Monte-Carlo volume-radius estimation refuses dimensions above this cap:
/// the polar-coordinate estimator averages ρⁿ and its tails are unusable
/// beyond it.
pub const VRAD_MC_DIM_CAP: usize = 32;

/// Moment order cap factor: q-th moments are trusted only for
/// `q ≤ Q_CAP_FACTOR · log2(n_samples)`.
pub const Q_CAP_FACTOR: f64 = 2.0;

/// Hit-and-run burn-in is `BURN_IN_FACTOR · n²` steps.
pub const BURN_IN_FACTOR: usize = 10;

/// Hit-and-run keeps one sample every `THINNING_FACTOR · n²` steps.
pub const THINNING_FACTOR: usize = 1;

/// Isotropic normalization gives up after this many estimate/whiten rounds.
pub const ISO_MAX_ROUNDS: usize = 20;

/// Default confidence multiplier for harness verdicts.
pub const CI_SIGMA: f64 = 3.0;

/// Quadrature fallback resolution for 1- and 2-dimensional sphere averages.
pub const QUADRATURE_MIN_NODES: usize = 100_000;

/// Covering lattices refuse to grow beyond this many candidate points.
pub const COVERING_MAX_POINTS: usize = 10_000_000;

/// Slope slack around 1/2 for vrad(Z_q) scaling when closed forms exist.
pub const SLOPE_SLACK_CLOSED: f64 = 0.05;

/// Slope slack around 1/2 for vrad(Z_q) scaling on Monte-Carlo families.
pub const SLOPE_SLACK_MC: f64 = 0.10;

/// M(Z_q) must decay at least this fast in log-log slope.
pub const M_ZQ_SLOPE_MAX: f64 = -0.15;

/// Fitted constants must stay within this multiplicative window over the
/// upper half of a grid to count as stable.
pub const FIT_STABILITY_WINDOW: f64 = 3.0;

/// The two-block sum evaluator must agree with the closed shape within this
/// multiplicative factor.
pub const SUM_SPLIT_FACTOR: f64 = 4.0;

/// Witness in-radius slack for exact axis-aligned optima.
pub const WITNESS_EXACT_SLACK: f64 = 1e-6;

/// Upper bound accepted for the reverse-inclusion constant
/// `Z_q ⊆ C·(q/p)·Z_p` on closed-form families.
pub const REVERSE_INCLUSION_C: f64 = 2.0;

/// Floor accepted for the equivalence ratio `h_{Z_n}/h_K` of a uniform
/// measure on a symmetric body: mass near the touching face gives at least
/// `(1−δ)·δ/2` with `δ = 1/2`.
pub const ZN_EQUIV_MIN_RATIO: f64 = 0.125;
