//! Numerical asymptotic convex geometry for origin-symmetric bodies.
//!
//! The crate is organized around three layers:
//!
//! * **Oracles** ([`bodies`]): a `Body` is a support/gauge/membership oracle
//!   triple over a structural representation (balls, `l_p` balls, ellipsoids,
//!   polytopes in facet or vertex form, and lazy transforms thereof).
//!   Closed forms are used wherever the representation admits them; polytope
//!   routes go through small dense linear programs.
//! * **Estimators** ([`functionals`], [`measures`]): spherical averages
//!   `M(K) = ∫ ‖θ‖_K dσ` and `M*(K) = ∫ h_K dσ`, volume radii
//!   `vrad(K) = (|K|/|B₂ⁿ|)^{1/n}`, extremal section/projection profiles,
//!   Gelfand-width surrogates, greedy covering numbers, and the `L_q`-centroid
//!   machinery of isotropic log-concave measures. Every estimate carries its
//!   method tag and a standard error.
//! * **Bounds and checks** ([`bounds`], [`harness`]): closed-form evaluators
//!   for entropy/width bounds (all normalized to absolute constant 1) and a
//!   reproducible experiment harness that compares measured quantities
//!   against them, emitting JSONL/CSV reports.
//!
//! Randomness is counter-seeded ([`sampling::RngStream`]); a report produced
//! with a fixed seed is byte-identical across worker counts.

pub mod bodies;
pub mod bounds;
pub mod error;
pub mod functionals;
pub mod harness;
mod linalg;
pub mod measures;
pub mod sampling;
pub mod tol;

pub use bodies::{Body, Subspace};
pub use error::GeomError;
pub use functionals::{EstimateCI, Method};
pub use sampling::RngStream;
