//! Dense linear-algebra primitives: Pfaffian, SVD, polar decomposition and
//! Haar-random orthogonal matrices.
//!
//! Matrices are `nalgebra` dense matrices over `f64` or [`C64`]. All routines
//! are pure functions of their inputs.

use nalgebra::{ComplexField, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

/// Complex scalar stored as a `(re, im)` pair.
pub type C64 = Complex<f64>;

/// Relative antisymmetry tolerance accepted by [`pfaffian`].
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Largest entry modulus.
pub fn max_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.iter().map(|x| x.clone().modulus()).fold(0.0, f64::max)
}

/// `max |A + A^T|`.
pub fn antisymmetry_residual<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let s = (a[(i, j)].clone() + a[(j, i)].clone()).modulus();
            worst = worst.max(s);
        }
    }
    worst
}

/// Pfaffian of an antisymmetric matrix.
///
/// Uses skew-symmetric Parlett–Reid elimination with partial pivoting, so the
/// sign is exact with respect to the row ordering of `a` (Pf of the
/// canonical symplectic form `[[0, 1], [-1, 0]]` is `+1`).
pub fn pfaffian<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<T> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let n = a.nrows();
    if n % 2 == 1 {
        return Err(Error::OddDimension(n));
    }
    if a.iter().any(|x| !x.clone().is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = max_abs(a);
    let residual = antisymmetry_residual(a);
    let tolerance = ANTISYMMETRY_TOL * scale;
    if residual > tolerance {
        return Err(Error::NotAntisymmetric {
            residual,
            tolerance,
        });
    }
    Ok(pfaffian_unchecked(a.clone()))
}

/// Parlett–Reid elimination without input validation. Consumes its argument
/// as scratch space.
pub(crate) fn pfaffian_unchecked<T: ComplexField<RealField = f64>>(mut a: DMatrix<T>) -> T {
    let n = a.nrows();
    if n == 0 {
        return T::one();
    }
    let mut pf = T::one();
    let mut k = 0;
    while k + 1 < n {
        // Pivot: largest entry below the diagonal in column k.
        let mut kp = k + 1;
        let mut best = a[(k + 1, k)].clone().modulus();
        for i in (k + 2)..n {
            let v = a[(i, k)].clone().modulus();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        if best == 0.0 {
            return T::zero();
        }
        let pivot = a[(k, k + 1)].clone();
        pf *= pivot.clone();
        if k + 2 < n {
            let tau: Vec<T> = ((k + 2)..n)
                .map(|j| a[(k, j)].clone() / pivot.clone())
                .collect();
            let col: Vec<T> = ((k + 2)..n).map(|i| a[(i, k + 1)].clone()).collect();
            let m = n - k - 2;
            for r in 0..m {
                for c in 0..m {
                    let upd = tau[r].clone() * col[c].clone() - col[r].clone() * tau[c].clone();
                    a[(k + 2 + r, k + 2 + c)] += upd;
                }
            }
        }
        k += 2;
    }
    pf
}

/// Determinant by LU factorization.
pub fn determinant<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> T {
    a.clone().lu().determinant()
}

/// Singular value decomposition `A = U diag(s) V^dagger` with `s` sorted in
/// decreasing order.
#[derive(Debug, Clone)]
pub struct Svd<T: ComplexField<RealField = f64>> {
    pub u: DMatrix<T>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<T>,
}

impl<T: ComplexField<RealField = f64>> Svd<T> {
    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            let s = T::from_real(*s);
            for i in 0..us.nrows() {
                us[(i, j)] = us[(i, j)].clone() * s.clone();
            }
        }
        us * self.v.adjoint()
    }
}

pub fn svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<Svd<T>> {
    if a.iter().any(|x| !x.clone().is_finite()) {
        return Err(Error::NonFinite);
    }
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(a.nrows(), 0),
            singular_values: DVector::zeros(0),
            v: DMatrix::zeros(a.ncols(), 0),
        });
    }
    let dec = nalgebra::SVD::new(a.clone(), true, true);
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested V^T");
    let s = dec.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let singular_values = DVector::from_iterator(k, order.iter().map(|&i| s[i]));
    let u = DMatrix::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let v_adj = v_t.adjoint();
    let v = DMatrix::from_columns(&order.iter().map(|&i| v_adj.column(i)).collect::<Vec<_>>());
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

/// Polar decomposition `Y = V P` with `P = (Y^dagger Y)^{1/2}` and `V` the
/// partial isometry vanishing on `ker P`.
#[derive(Debug, Clone)]
pub struct Polar<T: ComplexField<RealField = f64>> {
    pub isometry: DMatrix<T>,
    pub positive: DMatrix<T>,
    pub rank: usize,
}

pub fn polar_decompose<T: ComplexField<RealField = f64>>(y: &DMatrix<T>) -> Result<Polar<T>> {
    let dec = svd(y)?;
    let smax = dec.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = RANK_TOL * smax;
    let rank = dec
        .singular_values
        .iter()
        .filter(|&&s| s > cut && s > 0.0)
        .count();

    let mut isometry = DMatrix::<T>::zeros(y.nrows(), y.ncols());
    for j in 0..rank {
        isometry += dec.u.column(j) * dec.v.column(j).adjoint();
    }
    let mut positive = DMatrix::<T>::zeros(y.ncols(), y.ncols());
    for j in 0..dec.singular_values.len() {
        let s = dec.singular_values[j];
        if s > cut && s > 0.0 {
            positive += dec.v.column(j) * dec.v.column(j).adjoint() * T::from_real(s);
        }
    }
    Ok(Polar {
        isometry,
        positive,
        rank,
    })
}

/// Haar-distributed real orthogonal matrix, deterministic per seed.
pub fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_orthogonal_with(dim, &mut rng)
}

/// Haar-random orthogonal matrix drawn from `rng`: QR of a Gaussian matrix
/// with the signs of `diag(R)` absorbed into `Q`.
pub fn random_orthogonal_with<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(dim >= 1, "random_orthogonal needs dim >= 1");
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Gaussian real antisymmetric matrix (test and sampling helper).
pub fn random_antisymmetric_with<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let x: f64 = StandardNormal.sample(rng);
            a[(i, j)] = x;
            a[(j, i)] = -x;
        }
    }
    a
}

/// Orthonormal basis of the column span of `a` by modified Gram–Schmidt with
/// one reorthogonalization pass, visiting columns left to right. Columns
/// whose residual norm drops below `tol` are skipped.
pub fn column_span_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..a.ncols() {
        let mut v = a.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > tol {
            basis.push(v / norm);
        }
    }
    if basis.is_empty() {
        DMatrix::zeros(a.nrows(), 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Frobenius norm of `a - b`.
pub fn distance<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Pfaffian as a signed sum over perfect matchings (recursive expansion
    /// along the first row). Exponential; dims <= 10 only.
    pub(crate) fn pfaffian_by_matchings(a: &DMatrix<f64>) -> f64 {
        fn rec(a: &DMatrix<f64>, idx: &[usize]) -> f64 {
            if idx.is_empty() {
                return 1.0;
            }
            let first = idx[0];
            let mut total = 0.0;
            for k in 1..idx.len() {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                let rest: Vec<usize> = idx
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != 0 && i != k)
                    .map(|(_, &x)| x)
                    .collect();
                total += sign * a[(first, idx[k])] * rec(a, &rest);
            }
            total
        }
        let idx: Vec<usize> = (0..a.nrows()).collect();
        rec(a, &idx)
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn pfaffian_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 3.5, -3.5, 0.0]);
        assert_eq!(pfaffian(&a).unwrap(), 3.5);
    }

    #[test]
    fn pfaffian_symplectic_blocks() {
        for m in 1..6 {
            let mut a = DMatrix::<f64>::zeros(2 * m, 2 * m);
            for k in 0..m {
                a[(2 * k, 2 * k + 1)] = 1.0;
                a[(2 * k + 1, 2 * k)] = -1.0;
            }
            assert_eq!(pfaffian(&a).unwrap(), 1.0);
        }
    }

    #[test]
    fn pfaffian_squares_to_determinant() {
        let mut r = rng(7);
        for _ in 0..20 {
            let a = random_antisymmetric_with(8, &mut r);
            let pf = pfaffian(&a).unwrap();
            let det = determinant(&a);
            assert!((pf * pf - det).abs() <= 1e-10 * det.abs().max(1.0));
        }
    }

    #[test]
    fn pfaffian_matches_matchings_oracle() {
        let mut r = rng(11);
        for dim in [2, 4, 6, 8, 10] {
            for _ in 0..5 {
                let a = random_antisymmetric_with(dim, &mut r);
                let fast = pfaffian(&a).unwrap();
                let slow = pfaffian_by_matchings(&a);
                assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "{fast} vs {slow}");
            }
        }
    }

    #[test]
    fn pfaffian_half_identity_blocks() {
        // Pf(1/2 [[0, I], [-I, 0]]) with n x n blocks, n = 2m.
        for n in [2usize, 4] {
            let m = n / 2;
            let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
            for j in 0..n {
                a[(j, n + j)] = 0.5;
                a[(n + j, j)] = -0.5;
            }
            let expected = (-1f64).powi((m * (2 * m - 1)) as i32) * 2f64.powi(-(2 * m as i32));
            assert!((pfaffian(&a).unwrap() - expected).abs() < 1e-15);
            assert!((pfaffian_by_matchings(&a) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn pfaffian_congruence_rule() {
        let mut r = rng(3);
        for _ in 0..10 {
            let a = random_antisymmetric_with(6, &mut r);
            let b = DMatrix::<f64>::from_fn(6, 6, |_, _| r.random_range(-1.0..1.0));
            let bab = b.transpose() * &a * &b;
            let lhs = pfaffian(&bab).unwrap();
            let rhs = determinant(&b) * pfaffian(&a).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn pfaffian_complex_matches_real_scaling() {
        // Pf(i A) = i^m Pf(A) for a 2m x 2m real A.
        let mut r = rng(5);
        let a = random_antisymmetric_with(6, &mut r);
        let ia = a.map(|x| C64::new(0.0, x));
        let pf = pfaffian(&ia).unwrap();
        let expected = C64::new(0.0, 1.0).powu(3) * pfaffian(&a).unwrap();
        assert!((pf - expected).norm() < 1e-12);
    }

    #[test]
    fn pfaffian_rejects_bad_input() {
        let odd = DMatrix::<f64>::zeros(3, 3);
        assert!(matches!(pfaffian(&odd), Err(Error::OddDimension(3))));
        let sym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(pfaffian(&sym), Err(Error::NotAntisymmetric { .. })));
    }

    #[test]
    fn svd_examples() {
        let id = DMatrix::<f64>::identity(4, 4);
        let d = svd(&id).unwrap();
        assert!(d.singular_values.iter().all(|&s| (s - 1.0).abs() < 1e-14));

        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let d = svd(&diag).unwrap();
        assert!((d.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((d.singular_values[1] - 1.0).abs() < 1e-14);

        let mut r = rng(9);
        let a = DMatrix::<f64>::from_fn(6, 6, |_, _| r.random_range(-1.0..1.0));
        let d = svd(&a).unwrap();
        assert!(distance(&d.reconstruct(), &a) < 1e-10);
        let eye = DMatrix::<f64>::identity(6, 6);
        assert!(distance(&(d.u.transpose() * &d.u), &eye) < 1e-10);
        assert!(distance(&(d.v.transpose() * &d.v), &eye) < 1e-10);
        for w in d.singular_values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn svd_complex_reconstructs() {
        let mut r = rng(21);
        let a = DMatrix::<C64>::from_fn(5, 5, |_, _| {
            C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
        });
        let d = svd(&a).unwrap();
        assert!(distance(&d.reconstruct(), &a) < 1e-10);
    }

    #[test]
    fn polar_examples() {
        let q = random_orthogonal(4, 1);
        let p = polar_decompose(&q).unwrap();
        assert!(distance(&p.isometry, &q) < 1e-10);
        assert!(distance(&p.positive, &DMatrix::identity(4, 4)) < 1e-10);

        let z = DMatrix::<f64>::zeros(3, 3);
        let p = polar_decompose(&z).unwrap();
        assert_eq!(p.rank, 0);
        assert_eq!(p.isometry.norm(), 0.0);
        assert_eq!(p.positive.norm(), 0.0);

        let mut r = rng(2);
        let y = DMatrix::<f64>::from_fn(4, 4, |_, _| r.random_range(-1.0..1.0));
        let p = polar_decompose(&y).unwrap();
        assert!(distance(&(&p.isometry * &p.positive), &y) < 1e-10);
        let vtv = p.isometry.transpose() * &p.isometry;
        assert!(distance(&(&vtv * &vtv), &vtv) < 1e-10);
        // Agrees with U V^T from the SVD on full-rank input.
        let d = svd(&y).unwrap();
        assert!(distance(&(&d.u * d.v.transpose()), &p.isometry) < 1e-9);
    }

    #[test]
    fn polar_rank_deficient_kernel() {
        let y = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let p = polar_decompose(&y).unwrap();
        assert_eq!(p.rank, 2);
        // V vanishes on ker P.
        let e1 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!((&p.isometry * e1).norm() < 1e-14);
    }

    #[test]
    fn random_orthogonal_contract() {
        let one = random_orthogonal(1, 4);
        assert!((one[(0, 0)].abs() - 1.0).abs() < 1e-15);
        for dim in [2, 5, 9] {
            let q = random_orthogonal(dim, 99);
            assert!(distance(&(q.transpose() * &q), &DMatrix::identity(dim, dim)) < 1e-10);
            assert_eq!(q, random_orthogonal(dim, 99));
        }
        assert_ne!(random_orthogonal(4, 1), random_orthogonal(4, 2));
    }

    #[test]
    fn span_basis_of_coordinate_projection_is_identity_columns() {
        let mut d = DMatrix::<f64>::zeros(4, 4);
        d[(1, 1)] = 1.0;
        d[(3, 3)] = 1.0;
        let b = column_span_basis(&d, 1e-8);
        assert_eq!(b.ncols(), 2);
        assert_eq!(b[(1, 0)], 1.0);
        assert_eq!(b[(3, 1)], 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn pf_squared_is_det(seed in any::<u64>(), m in 1usize..6) {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let a = random_antisymmetric_with(2 * m, &mut r);
                let pf = pfaffian(&a).unwrap();
                let det = determinant(&a);
                prop_assert!((pf * pf - det).abs() <= 1e-9 * det.abs().max(1.0));
            }

            #[test]
            fn pf_transforms_with_det(seed in any::<u64>()) {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let a = random_antisymmetric_with(6, &mut r);
                let b = DMatrix::<f64>::from_fn(6, 6, |_, _| r.random_range(-1.0..1.0));
                let lhs = pfaffian(&(b.transpose() * &a * &b)).unwrap();
                let rhs = determinant(&b) * pfaffian(&a).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
            }
        }
    }
}
