//! Random quasifree states for tests, benchmarks and empirical studies.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{random_antisymmetric_with, random_orthogonal_with};
use crate::quasifree::{BasisProjection, CovarianceMatrix};

/// Independent per-item seed derived from a master seed (SplitMix64 step).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pairing(nus: &[f64]) -> DMatrix<f64> {
    let n = nus.len();
    let mut g = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (k, &nu) in nus.iter().enumerate() {
        g[(2 * k, 2 * k + 1)] = nu;
        g[(2 * k + 1, 2 * k)] = -nu;
    }
    g
}

/// `G = O blockdiag(nu_k J) O^T` with `nu_k` uniform in `[-1, 1]` and Haar `O`.
pub fn random_state<R: Rng + ?Sized>(modes: usize, rng: &mut R) -> CovarianceMatrix {
    let nus: Vec<f64> = (0..modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
    rotated(&nus, rng)
}

/// Pure state: every `nu_k = +-1`.
pub fn random_pure_state<R: Rng + ?Sized>(modes: usize, rng: &mut R) -> BasisProjection {
    let nus: Vec<f64> = (0..modes)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    BasisProjection::new(rotated(&nus, rng)).expect("pure by construction")
}

fn rotated<R: Rng + ?Sized>(nus: &[f64], rng: &mut R) -> CovarianceMatrix {
    let o = random_orthogonal_with(2 * nus.len(), rng);
    let g = &o * pairing(nus) * o.transpose();
    let g = (&g - g.transpose()) * 0.5;
    CovarianceMatrix::from_gamma(g).expect("valid by construction")
}

/// State with `X = 0` for the equal-halves split: `G = [[0, Y], [-Y^T, Z]]`
/// with Gaussian `Y`, `Z`, rescaled to operator norm uniform in `[0.5, 1)`.
pub fn random_x_zero_state<R: Rng + ?Sized>(modes: usize, rng: &mut R) -> CovarianceMatrix {
    let n = modes;
    let y = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let z = random_antisymmetric_with(n, rng);
    let mut g = DMatrix::<f64>::zeros(2 * n, 2 * n);
    g.view_mut((0, n), (n, n)).copy_from(&y);
    g.view_mut((n, 0), (n, n)).copy_from(&(-y.transpose()));
    g.view_mut((n, n), (n, n)).copy_from(&z);
    let norm = g.singular_values().max();
    let t: f64 = rng.random_range(0.5..1.0);
    CovarianceMatrix::from_gamma(g * (t / norm)).expect("norm below one")
}

/// Maximally entangled target with a Haar-random orthogonal off-diagonal
/// block of size `k`.
pub fn random_maximally_entangled<R: Rng + ?Sized>(k: usize, rng: &mut R) -> BasisProjection {
    let v = random_orthogonal_with(k, rng);
    BasisProjection::maximally_entangled(&v).expect("orthogonal block")
}
