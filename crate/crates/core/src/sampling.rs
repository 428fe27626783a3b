//! Seeded randomness: sphere points, Haar subspaces, deterministic
//! direction grids, and gradient-free local refinement on spheres and
//! Grassmannians.
//!
//! All randomness flows through [`RngStream`], a `(seed, stream_id)` pair.
//! Derived streams are labelled, not sequential, so an experiment cell
//! draws the same numbers no matter which worker runs it or in what order.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bodies::Subspace;
use crate::error::GeomError;
use crate::linalg;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x1000_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// splitmix64 finalizer: avalanche a single word.
fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A named random stream. Identical `(seed, stream_id)` pairs produce
/// identical draws regardless of scheduling; parallel code derives one
/// stream per task label instead of sharing a generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for a named subtask.
    pub fn derive(&self, label: &str) -> RngStream {
        let h = fnv1a(FNV_OFFSET ^ self.stream_id, label.as_bytes());
        RngStream { seed: self.seed, stream_id: h }
    }

    /// Child stream for the `index`-th cell of a named family.
    pub fn derive_indexed(&self, label: &str, index: u64) -> RngStream {
        let h = fnv1a(FNV_OFFSET ^ self.stream_id, label.as_bytes());
        let h = fnv1a(h, &index.to_le_bytes());
        RngStream { seed: self.seed, stream_id: h }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = mix(self.seed) ^ mix(self.stream_id ^ 0x9e37_79b9_7f4a_7c15);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = mix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// Standard Gaussian vector.
pub fn sample_gaussian(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut g: DVector<f64> = DVector::zeros(n);
    for i in 0..n {
        g[i] = StandardNormal.sample(rng);
    }
    g
}

/// Uniform point on the unit sphere `S^{n-1}` (for n = 1: ±1).
pub fn sample_sphere(n: usize, rng: &mut ChaCha8Rng) -> Result<DVector<f64>, GeomError> {
    if n == 0 {
        return Err(GeomError::InvalidParameter("sphere dimension must be >= 1".into()));
    }
    loop {
        let g = sample_gaussian(n, rng);
        let norm = g.norm();
        if norm > 1e-12 {
            return Ok(g / norm);
        }
    }
}

/// Haar-distributed k-dimensional subspace of R^n: orthonormal factor of a
/// Gaussian n×k matrix, QR sign convention (positive R diagonal) so the
/// basis itself is reproducible, not only the subspace.
pub fn sample_grassmannian(
    n: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Subspace, GeomError> {
    if k == 0 || k > n {
        return Err(GeomError::InvalidParameter(format!(
            "subspace dimension must satisfy 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut g = DMatrix::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            g[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let (q, _r) = linalg::qr_positive(&g);
    Ok(Subspace::from_orthonormal(q))
}

/// Deterministic unit-vector grid: equal angles on the circle (n = 2) or a
/// Fibonacci sphere (n = 3).
pub fn direction_grid(n: usize, resolution: usize) -> Result<Vec<DVector<f64>>, GeomError> {
    if resolution == 0 {
        return Err(GeomError::InvalidParameter("grid resolution must be >= 1".into()));
    }
    match n {
        2 => {
            let step = std::f64::consts::TAU / resolution as f64;
            Ok((0..resolution)
                .map(|j| {
                    let a = j as f64 * step;
                    DVector::from_row_slice(&[a.cos(), a.sin()])
                })
                .collect())
        }
        3 => {
            // Golden-angle spiral: z stratified, azimuth incremented by the
            // golden angle.
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            Ok((0..resolution)
                .map(|j| {
                    let z = 1.0 - (2.0 * j as f64 + 1.0) / resolution as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * j as f64;
                    DVector::from_row_slice(&[r * a.cos(), r * a.sin(), z])
                })
                .collect())
        }
        _ => Err(GeomError::InvalidParameter(format!(
            "direction grids exist for dimensions 2 and 3, got {n}"
        ))),
    }
}

/// Geodesic random search on the sphere: perturb the current point by a
/// tangent step whose angle shrinks on failure. Oracles may be non-smooth,
/// so no gradients are used. Returns the best point and its value.
pub fn refine_direction<F: Fn(&DVector<f64>) -> f64>(
    f: F,
    start: &DVector<f64>,
    maximize: bool,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, f64) {
    let n = start.len();
    let sign = if maximize { 1.0 } else { -1.0 };
    let mut best = start / start.norm();
    let mut best_val = f(&best);
    if n < 2 {
        return (best, best_val);
    }
    let mut angle = 0.5f64;
    for _ in 0..steps {
        let g = sample_gaussian(n, rng);
        let tangent = &g - &best * best.dot(&g);
        let tnorm = tangent.norm();
        if tnorm < 1e-14 {
            continue;
        }
        let cand = &best * angle.cos() + tangent * (angle.sin() / tnorm);
        let val = f(&cand);
        if sign * (val - best_val) > 0.0 {
            best = cand;
            best_val = val;
        } else {
            angle *= 0.9;
            if angle < 1e-7 {
                break;
            }
        }
    }
    (best, best_val)
}

/// Random search over the Grassmannian: perturb the basis by a Gaussian
/// matrix with shrinking magnitude and re-orthonormalize.
pub fn refine_subspace<F: Fn(&Subspace) -> f64>(
    f: F,
    start: &Subspace,
    maximize: bool,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> (Subspace, f64) {
    let n = start.ambient_dim();
    let k = start.dim();
    let sign = if maximize { 1.0 } else { -1.0 };
    let mut best = start.clone();
    let mut best_val = f(&best);
    if k == n {
        return (best, best_val);
    }
    let mut scale = 0.5f64;
    for _ in 0..steps {
        let mut g = DMatrix::zeros(n, k);
        for j in 0..k {
            for i in 0..n {
                g[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let perturbed = best.basis() + g * scale;
        let (q, _r) = linalg::qr_positive(&perturbed);
        let cand = Subspace::from_orthonormal(q);
        let val = f(&cand);
        if sign * (val - best_val) > 0.0 {
            best = cand;
            best_val = val;
        } else {
            scale *= 0.9;
            if scale < 1e-7 {
                break;
            }
        }
    }
    (best, best_val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_streams_reproduce_draws() {
        let s = RngStream::new(7, 42);
        let mut r1 = s.rng();
        let mut r2 = s.rng();
        for _ in 0..32 {
            let a = sample_sphere(5, &mut r1).unwrap();
            let b = sample_sphere(5, &mut r2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn derived_streams_differ_by_label_and_index() {
        let s = RngStream::new(7, 0);
        assert_ne!(s.derive("a").stream_id(), s.derive("b").stream_id());
        assert_ne!(
            s.derive_indexed("a", 0).stream_id(),
            s.derive_indexed("a", 1).stream_id()
        );
        assert_eq!(s.derive("a"), s.derive("a"));
    }

    #[test]
    fn sphere_samples_are_unit_and_cover_both_signs_in_1d() {
        let mut rng = RngStream::new(3, 1).rng();
        let mut pos = 0usize;
        let draws = 10_000;
        for _ in 0..draws {
            let x = sample_sphere(1, &mut rng).unwrap();
            assert!((x[0].abs() - 1.0).abs() < 1e-12);
            if x[0] > 0.0 {
                pos += 1;
            }
        }
        // 3σ band for a fair coin over 10⁴ draws.
        let dev = (pos as f64 - draws as f64 / 2.0).abs();
        assert!(dev < 3.0 * (draws as f64 / 4.0).sqrt(), "sign bias: {pos}/{draws}");
        let x = sample_sphere(7, &mut rng).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grassmannian_bases_are_orthonormal_and_reproducible() {
        let s = RngStream::new(11, 5);
        let sub = sample_grassmannian(6, 3, &mut s.rng()).unwrap();
        let gram = sub.basis().tr_mul(sub.basis());
        assert!((gram - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
        let again = sample_grassmannian(6, 3, &mut s.rng()).unwrap();
        assert_eq!(sub.basis(), again.basis());
        let full = sample_grassmannian(4, 4, &mut s.rng()).unwrap();
        let gram = full.basis().tr_mul(full.basis());
        assert!((gram - DMatrix::<f64>::identity(4, 4)).amax() < 1e-10);
    }

    #[test]
    fn mean_projector_is_k_over_n() {
        let mut rng = RngStream::new(19, 2).rng();
        let (n, k, draws) = (4, 2, 4000);
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for _ in 0..draws {
            let sub = sample_grassmannian(n, k, &mut rng).unwrap();
            acc += sub.basis() * sub.basis().transpose();
        }
        acc /= draws as f64;
        let expect = DMatrix::<f64>::identity(n, n) * (k as f64 / n as f64);
        // Entry std dev is below 0.5/√draws; 0.05 is a wide 3σ envelope.
        assert!((acc - expect).amax() < 0.05);
    }

    #[test]
    fn circle_grid_hits_quarter_angles() {
        let grid = direction_grid(2, 4).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (g, e) in grid.iter().zip(expect.iter()) {
            assert!((g[0] - e[0]).abs() < 1e-12 && (g[1] - e[1]).abs() < 1e-12);
        }
        assert!(direction_grid(4, 10).is_err());
    }

    #[test]
    fn fibonacci_grid_is_unit_norm() {
        for v in direction_grid(3, 257).unwrap() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_direction_finds_axis_maximum() {
        let mut rng = RngStream::new(23, 9).rng();
        let start = sample_sphere(3, &mut rng).unwrap();
        let (best, val) = refine_direction(|x| x[0], &start, true, 400, &mut rng);
        assert!(val > 1.0 - 1e-6, "reached {val}");
        assert!((best.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refine_subspace_aligns_with_long_axis() {
        // Maximize the length of the projection of 4e₁ onto a 2-plane in R⁴.
        let mut rng = RngStream::new(29, 4).rng();
        let target = DVector::from_row_slice(&[4.0, 0.0, 0.0, 0.0]);
        let start = sample_grassmannian(4, 2, &mut rng).unwrap();
        let (_best, val) =
            refine_subspace(|s| s.restrict(&target).norm(), &start, true, 600, &mut rng);
        assert!(val > 4.0 - 1e-4, "reached {val}");
    }
}
