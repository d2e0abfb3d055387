use nalgebra::DMatrix;
use serde::Serialize;

use super::{
    blocks, check_partial_isometry, restrict, BasisProjection, BipartiteSplit, CovarianceMatrix,
    Orientation, RealProjection, Restriction, STRUCTURE_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{determinant, pfaffian};

/// Tolerance for agreement between two independent formulas.
pub const CROSS_CHECK_TOL: f64 = 1e-8;

/// Fidelities with an imaginary part above this are rejected.
const IMAGINARY_TOL: f64 = 1e-8;

fn sign_power(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn clamp_unit(x: f64, tol: f64) -> Option<f64> {
    if x < -tol || x > 1.0 + tol {
        None
    } else {
        Some(x.clamp(0.0, 1.0))
    }
}

/// `tr(rho_S theta) = 2^n (-1)^n Pf(-i(S - I/2)) = (-1)^n Pf(G)` for the
/// parity operator with the given orientation.
pub fn parity_expectation(s: &CovarianceMatrix, orientation: Orientation) -> Result<f64> {
    let pf = pfaffian(s.gamma())?;
    Ok(orientation.sign() * sign_power(s.modes()) * pf)
}

/// Probability of equal outcomes in the joint parity measurement,
/// `(1 + (-4)^m Pf(-i(S - I/2)))/2` for `n = 2m` modes, times `orientation`
/// inside the bracket.
///
/// The `(-1)^m` carried by `(-4)^m` flips the canonical parity operator for
/// odd `m`: the result equals `(1 + parity_expectation(s, o'))/2` with
/// `o' = (-1)^m orientation`. With that convention a maximally entangled
/// state with `det V = +1` has probability one.
pub fn parity_probability(s: &CovarianceMatrix, orientation: Orientation) -> Result<f64> {
    let n = s.modes();
    if n % 2 == 1 {
        return Err(Error::InvalidParameter(format!(
            "parity probability needs an even number of modes, got {n}"
        )));
    }
    // (-4)^m Pf(G/2) = (-1)^m Pf(G).
    let p = 0.5 * (1.0 + orientation.sign() * sign_power(n / 2) * pfaffian(s.gamma())?);
    clamp_unit(p, STRUCTURE_TOL).ok_or(Error::ProbabilityOutOfRange(p))
}

/// `<psi_E, rho_S psi_E> = Pf(-i(I - S - E))`, with the Pfaffian sign fixed
/// so that the fidelity of `E` with itself is `+1`.
pub fn fock_fidelity(s: &CovarianceMatrix, e: &BasisProjection) -> Result<f64> {
    if s.dim() != e.covariance().dim() {
        return Err(Error::DimensionMismatch {
            expected: e.covariance().dim(),
            found: s.dim(),
        });
    }
    fidelity_from_gammas(s.gamma(), e.gamma())
}

/// `2^{-n} Pf(G_E) Pf(G_S + G_E)`: `Pf(-i(I - S - E)) = (-1/2)^n Pf(G_S + G_E)`
/// and `(-1)^n Pf(G_E)` is the sign making `S = E` give `+1`.
fn fidelity_from_gammas(gs: &DMatrix<f64>, ge: &DMatrix<f64>) -> Result<f64> {
    let n = gs.nrows() / 2;
    let pe = pfaffian(ge)?;
    let sum = gs + ge;
    let value = 0.5f64.powi(n as i32) * pe.signum() * pfaffian(&sum)?;
    clamp_unit(value, STRUCTURE_TOL).ok_or(Error::OutOfUnitInterval(value))
}

/// Complex-route fidelity `Pf(-i(I - S - E))` times the orientation sign of
/// `E`; used to expose any imaginary residue of the Pfaffian.
pub fn fock_fidelity_complex(s: &CovarianceMatrix, e: &BasisProjection) -> Result<f64> {
    use crate::linalg::C64;
    let n = s.modes();
    let id = DMatrix::<C64>::identity(2 * n, 2 * n);
    let arg = (id - s.entries() - e.covariance().entries()) * C64::new(0.0, -1.0);
    let pf = pfaffian(&arg)?;
    let orient = sign_power(n) * pfaffian(e.gamma())?.signum();
    let value = pf * orient;
    if value.im.abs() > IMAGINARY_TOL {
        return Err(Error::ComplexFidelity(value.im));
    }
    clamp_unit(value.re, STRUCTURE_TOL).ok_or(Error::OutOfUnitInterval(value.re))
}

/// `E~`: same diagonal blocks as `E`, off-diagonal blocks negated.
pub fn tilde_projection(e: &BasisProjection, split: &BipartiteSplit) -> Result<BasisProjection> {
    split.check_dim(e.covariance().dim())?;
    let mut g = e.gamma().clone();
    for &i in split.a() {
        for &j in split.b() {
            g[(i, j)] = -g[(i, j)];
            g[(j, i)] = -g[(j, i)];
        }
    }
    BasisProjection::from_gamma(g)
}

/// Solution of the twirl linear system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwirlCoefficients {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
}

impl TwirlCoefficients {
    /// Largest absolute residual of the four defining equations.
    pub fn residual(&self, p: f64, fid_e: f64, fid_tilde: f64, m: usize) -> f64 {
        let d2 = output_dimension(m).powi(2);
        [
            p / 2.0 - ((self.lambda_plus + self.lambda_minus) / 2.0 + self.mu_plus * d2),
            (1.0 - p) / 2.0 - self.mu_minus * d2,
            fid_e - (self.lambda_plus + self.mu_plus),
            fid_tilde - (self.lambda_minus + self.mu_plus),
        ]
        .iter()
        .map(|r| r.abs())
        .fold(0.0, f64::max)
    }
}

/// `d = 2^{m-1}`, the local dimension of the distilled pair.
pub fn output_dimension(m: usize) -> f64 {
    2f64.powi(m as i32 - 1)
}

/// Solves `p/2 = (l+ + l-)/2 + mu+ d^2`, `(1-p)/2 = mu- d^2`,
/// `fid_E = l+ + mu+`, `fid_tilde = l- + mu+`.
pub fn twirl_coefficients(p: f64, fid_e: f64, fid_tilde: f64, m: usize) -> Result<TwirlCoefficients> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("twirl needs m >= 2, got {m}")));
    }
    for (name, x) in [("p", p), ("fid_E", fid_e), ("fid_tilde", fid_tilde)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParameter(format!("{name} = {x} outside [0, 1]")));
        }
    }
    let d2 = output_dimension(m).powi(2);
    let mu_minus = (1.0 - p) / (2.0 * d2);
    let mu_plus = (p - fid_e - fid_tilde) / (2.0 * (d2 - 1.0));
    let c = TwirlCoefficients {
        lambda_plus: fid_e - mu_plus,
        lambda_minus: fid_tilde - mu_plus,
        mu_plus,
        mu_minus,
    };
    for (name, value) in [
        ("lambda_plus", c.lambda_plus),
        ("lambda_minus", c.lambda_minus),
        ("mu_plus", c.mu_plus),
        ("mu_minus", c.mu_minus),
    ] {
        if value < -STRUCTURE_TOL {
            return Err(Error::NegativeTwirlCoefficient { name, value });
        }
    }
    Ok(c)
}

/// `f = (fid_E + fid_tilde)/p` and whether `f > 1/d`.
pub fn output_fidelity(fid_e: f64, fid_tilde: f64, p: f64, m: usize) -> Result<(f64, bool)> {
    if p <= 0.0 {
        return Err(Error::NonPositiveProbability(p));
    }
    let f = (fid_e + fid_tilde) / p;
    Ok((f, f > 1.0 / output_dimension(m)))
}

/// `p`, `f` and `pf` of one protocol run, with the intermediate fidelities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolQuantities {
    pub m: usize,
    pub p: f64,
    /// `None` when `p = 0`.
    pub f: Option<f64>,
    pub pf: f64,
    pub fid_e: f64,
    pub fid_tilde: f64,
    /// `pf` from the determinant formula, when its hypothesis holds.
    pub pf_determinant: Option<f64>,
}

/// Evaluates the protocol `(m, D, V)` on `s`.
///
/// The state is restricted to `Ran D`; the target is the maximally entangled
/// state whose off-diagonal block is `V` compressed to `Ran D`, and the
/// parity operator is oriented so that the target has parity `+1`.
pub fn protocol_quantities(
    s: &CovarianceMatrix,
    split: &BipartiteSplit,
    d: &RealProjection,
    v: &DMatrix<f64>,
) -> Result<ProtocolQuantities> {
    split.check_dim(s.dim())?;
    let (ra, rb) = d.ranks()?;
    if ra != rb || ra % 2 == 1 || ra < 4 {
        return Err(Error::InvalidProjection(format!(
            "rank D_A = {ra}, rank D_B = {rb}; need equal even ranks 2m with m >= 2"
        )));
    }
    check_partial_isometry(v, d)?;
    let r = restrict(s, split, d)?;
    restricted_quantities(&r, v)
}

/// Protocol quantities on an existing restriction; `v` is in split-local
/// coordinates of the unrestricted state.
pub fn restricted_quantities(r: &Restriction, v: &DMatrix<f64>) -> Result<ProtocolQuantities> {
    let vr = r.basis_a.transpose() * v * &r.basis_b;
    evaluate_restricted(&r.state, &vr)
}

/// `s` has `2m + 2m` Majorana indices in Alice-first order; `vr` is the
/// orthogonal `2m x 2m` target block.
pub(crate) fn evaluate_restricted(s: &CovarianceMatrix, vr: &DMatrix<f64>) -> Result<ProtocolQuantities> {
    let k = vr.nrows();
    let m = k / 2;
    if s.dim() != 2 * k || k % 2 == 1 {
        return Err(Error::DimensionMismatch {
            expected: 2 * k,
            found: s.dim(),
        });
    }
    let orth = (vr.transpose() * vr - DMatrix::identity(k, k)).amax();
    if orth > STRUCTURE_TOL {
        return Err(Error::InvalidIsometry(format!(
            "compressed V is not orthogonal (residual {orth:.3e})"
        )));
    }
    let target = BasisProjection::maximally_entangled(vr)?;
    let split = BipartiteSplit::leading(2 * k, k)?;
    let tilde = tilde_projection(&target, &split)?;

    // Pf(G_E) = (-1)^m det V, so this orientation gives the target parity +1.
    let orientation = Orientation::from_sign(determinant(vr));
    let p = parity_probability(s, orientation)?;
    let fid_e = fock_fidelity(s, &target)?;
    let fid_tilde = fock_fidelity(s, &tilde)?;
    let pf = fid_e + fid_tilde;
    let f = if p > 0.0 { Some(pf / p) } else { None };

    let b = blocks(s, &split)?;
    let pf_determinant = if b.x.amax() <= STRUCTURE_TOL || b.z.amax() <= STRUCTURE_TOL {
        let scale = 0.5f64.powi(2 * m as i32);
        let alt = scale * (determinant(&(&b.y + vr)).abs() + determinant(&(&b.y - vr)).abs());
        if (alt - pf).abs() > CROSS_CHECK_TOL {
            return Err(Error::FormulaMismatch {
                formula_a: "block Pfaffian",
                formula_b: "determinant",
                difference: (alt - pf).abs(),
            });
        }
        Some(alt)
    } else {
        None
    };

    Ok(ProtocolQuantities {
        m,
        p,
        f,
        pf,
        fid_e,
        fid_tilde,
        pf_determinant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn halves(n_modes: usize) -> BipartiteSplit {
        BipartiteSplit::halves(2 * n_modes)
    }

    #[test]
    fn mixed_state_parity() {
        for n in [2, 4, 6] {
            let s = CovarianceMatrix::maximally_mixed(n);
            assert_eq!(parity_expectation(&s, Orientation::Positive).unwrap(), 0.0);
            assert_eq!(parity_probability(&s, Orientation::Positive).unwrap(), 0.5);
        }
    }

    #[test]
    fn maximally_entangled_parity_is_minus_one_to_m() {
        for m in 1..4 {
            let e = BasisProjection::maximally_entangled(&DMatrix::identity(2 * m, 2 * m)).unwrap();
            let t = parity_expectation(e.covariance(), Orientation::Positive).unwrap();
            assert!((t - sign_power(m)).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_states_have_definite_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..6 {
            let e = sampling::random_pure_state(n, &mut rng);
            let t = parity_expectation(e.covariance(), Orientation::Positive).unwrap();
            assert!((t.abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..6 {
            let e = sampling::random_pure_state(n, &mut rng);
            assert!((fock_fidelity(e.covariance(), &e).unwrap() - 1.0).abs() < 1e-10);
            let mixed = CovarianceMatrix::maximally_mixed(n);
            let expected = 0.5f64.powi(n as i32);
            assert!((fock_fidelity(&mixed, &e).unwrap() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn complex_route_agrees_with_real_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 1..6 {
            let s = sampling::random_state(n, &mut rng);
            let e = sampling::random_pure_state(n, &mut rng);
            let a = fock_fidelity(&s, &e).unwrap();
            let b = fock_fidelity_complex(&s, &e).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn tilde_examples() {
        let e = BasisProjection::maximally_entangled(&DMatrix::identity(4, 4)).unwrap();
        let split = halves(4);
        let t = tilde_projection(&e, &split).unwrap();
        let b = blocks(t.covariance(), &split).unwrap();
        assert!((&b.y + DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
        let tt = tilde_projection(&t, &split).unwrap();
        assert_eq!(tt, e);
        let pe = parity_expectation(e.covariance(), Orientation::Positive).unwrap();
        let pt = parity_expectation(t.covariance(), Orientation::Positive).unwrap();
        assert!((pe - pt).abs() < 1e-12);
    }

    #[test]
    fn twirl_pure_target() {
        let c = twirl_coefficients(1.0, 1.0, 0.0, 2).unwrap();
        assert_eq!(
            c,
            TwirlCoefficients {
                lambda_plus: 1.0,
                lambda_minus: 0.0,
                mu_plus: 0.0,
                mu_minus: 0.0
            }
        );
    }

    #[test]
    fn twirl_uniform_solution_for_mixed_state() {
        // Maximally mixed 2m-mode state: fid_E = fid_tilde = 2^{-2m}, p = 1/2.
        for m in 2..5 {
            let u = 0.5f64.powi(2 * m as i32);
            let c = twirl_coefficients(0.5, u, u, m).unwrap();
            assert!(c.lambda_plus.abs() < 1e-15);
            assert!(c.lambda_minus.abs() < 1e-15);
            assert!((c.mu_plus - u).abs() < 1e-15);
            assert!((c.mu_minus - u).abs() < 1e-15);
            assert!(c.residual(0.5, u, u, m) < 1e-12);
        }
    }

    #[test]
    fn twirl_round_trip_and_rejection() {
        let c = twirl_coefficients(0.8, 0.5, 0.1, 3).unwrap();
        assert!(c.residual(0.8, 0.5, 0.1, 3) < 1e-12);
        assert!(matches!(
            twirl_coefficients(0.2, 0.5, 0.4, 2),
            Err(Error::NegativeTwirlCoefficient { .. })
        ));
    }

    #[test]
    fn output_fidelity_examples() {
        assert_eq!(output_fidelity(1.0, 0.0, 1.0, 2).unwrap(), (1.0, true));
        let (f, ok) = output_fidelity(1.0 / 16.0, 1.0 / 16.0, 0.5, 2).unwrap();
        assert_eq!(f, 0.25);
        assert!(!ok);
        assert!(output_fidelity(0.1, 0.1, 0.0, 2).is_err());
    }

    #[test]
    fn protocol_on_perfect_state() {
        let v = random_orthogonal(4, 5);
        let e = BasisProjection::maximally_entangled(&v).unwrap();
        let q = protocol_quantities(e.covariance(), &halves(4), &RealProjection::identity(4, 4), &v).unwrap();
        assert!((q.p - 1.0).abs() < 1e-12);
        assert!((q.f.unwrap() - 1.0).abs() < 1e-12);
        assert!(q.pf_determinant.is_some());
    }

    #[test]
    fn protocol_on_mixed_state() {
        let s = CovarianceMatrix::maximally_mixed(6);
        let split = halves(6);
        for seed in 0..5 {
            let qa = random_orthogonal(6, seed).columns(0, 4).into_owned();
            let qb = random_orthogonal(6, seed + 100).columns(0, 4).into_owned();
            let o = random_orthogonal(4, seed + 200);
            let v = &qa * o * qb.transpose();
            let d = RealProjection::from_bases(&qa, &qb);
            let q = protocol_quantities(&s, &split, &d, &v).unwrap();
            assert!((q.p - 0.5).abs() < 1e-12);
            assert!((q.f.unwrap() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn protocol_rejects_bad_isometry() {
        let s = CovarianceMatrix::maximally_mixed(4);
        let v = DMatrix::<f64>::identity(4, 4) * 0.5;
        assert!(protocol_quantities(&s, &halves(4), &RealProjection::identity(4, 4), &v).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn fidelity_in_unit_interval(seed in any::<u64>(), n in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = sampling::random_state(n, &mut rng);
                let e = sampling::random_pure_state(n, &mut rng);
                let f = fock_fidelity(&s, &e).unwrap();
                prop_assert!((0.0..=1.0).contains(&f));
            }

            #[test]
            fn probability_is_half_one_plus_parity(seed in any::<u64>(), m in 1usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = sampling::random_state(2 * m, &mut rng);
                for o in [Orientation::Positive, Orientation::Negative] {
                    let p = parity_probability(&s, o).unwrap();
                    let theta_o = if m % 2 == 1 { o.flip() } else { o };
                    let t = parity_expectation(&s, theta_o).unwrap();
                    prop_assert!((p - (1.0 + t) / 2.0).abs() < 1e-14);
                }
            }

            #[test]
            fn fidelity_pair_below_probability(seed in any::<u64>(), m in 1usize..3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = sampling::random_state(2 * m, &mut rng);
                let v = crate::linalg::random_orthogonal_with(2 * m, &mut rng);
                let e = BasisProjection::maximally_entangled(&v).unwrap();
                let split = BipartiteSplit::halves(4 * m);
                let t = tilde_projection(&e, &split).unwrap();
                let o = Orientation::from_sign(determinant(&v));
                let p = parity_probability(&s, o).unwrap();
                let sum = fock_fidelity(&s, &e).unwrap() + fock_fidelity(&s, &t).unwrap();
                prop_assert!(sum <= p + 1e-9);
            }

            #[test]
            fn determinant_formula_agrees_when_x_vanishes(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = sampling::random_x_zero_state(4, &mut rng);
                let v = crate::linalg::random_orthogonal_with(4, &mut rng);
                let q = protocol_quantities(&s, &BipartiteSplit::halves(8), &RealProjection::identity(4, 4), &v).unwrap();
                let alt = q.pf_determinant.unwrap();
                prop_assert!((alt - q.pf).abs() < 1e-9);
            }
        }
    }
}
