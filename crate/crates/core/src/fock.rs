//! Exact dense simulation of small Fermionic systems.
//!
//! The Fock space of `n` modes is `C^(2^n)` with occupation-number basis
//! states indexed by bitmasks. Majorana operators are built through the
//! Jordan–Wigner construction from operators `c_k` with `c_k^* Omega = 0`,
//! i.e. `c_k` is what is commonly called the creation operator `a_k^dagger`:
//!
//! `B_k = (c_k + c_k^*)/sqrt(2)`, `B_{k+n} = i (c_k - c_k^*)/sqrt(2)`.
//!
//! Every product of Majoranas maps a basis state to a multiple of another
//! basis state, so monomials are stored as a bit flip plus a coefficient per
//! basis state; dense matrices are only formed at the end.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{pfaffian_unchecked, C64};
use crate::quasifree::{
    blocks, fock_fidelity, parity_expectation, parity_probability, tilde_projection,
    BasisProjection, BipartiteSplit, CovarianceMatrix, Orientation, STRUCTURE_TOL,
};

/// Memory guard: dense operators are `2^n x 2^n`.
pub const MAX_MODES: usize = 7;

pub type DenseOperator = DMatrix<C64>;

/// Operator mapping `|x>` to `coeff[x] |x ^ flip>`.
#[derive(Debug, Clone, PartialEq)]
struct Monomial {
    flip: usize,
    coeff: Vec<C64>,
}

impl Monomial {
    fn identity(dim: usize) -> Self {
        Self {
            flip: 0,
            coeff: vec![C64::new(1.0, 0.0); dim],
        }
    }

    /// `self * other`.
    fn mul(&self, other: &Monomial) -> Monomial {
        let coeff = (0..other.coeff.len())
            .map(|x| other.coeff[x] * self.coeff[x ^ other.flip])
            .collect();
        Monomial {
            flip: self.flip ^ other.flip,
            coeff,
        }
    }

    fn scale(mut self, c: C64) -> Self {
        for z in &mut self.coeff {
            *z *= c;
        }
        self
    }

    fn trace_of_square(&self) -> C64 {
        (0..self.coeff.len())
            .map(|x| self.coeff[x] * self.coeff[x ^ self.flip])
            .sum()
    }

    fn add_to(&self, weight: C64, out: &mut DenseOperator) {
        for x in 0..self.coeff.len() {
            out[(x ^ self.flip, x)] += weight * self.coeff[x];
        }
    }

    fn dense(&self) -> DenseOperator {
        let dim = self.coeff.len();
        let mut out = DenseOperator::zeros(dim, dim);
        self.add_to(C64::new(1.0, 0.0), &mut out);
        out
    }
}

/// The `2n` Majorana operators of `n` modes.
#[derive(Debug, Clone)]
pub struct MajoranaSet {
    modes: usize,
    ops: Vec<Monomial>,
}

/// Builds `B_0 .. B_{2n-1}` on `C^(2^n)`.
pub fn majorana_ops(n: usize) -> Result<MajoranaSet> {
    if n == 0 || n > MAX_MODES {
        return Err(Error::InvalidParameter(format!(
            "dense oracle supports 1..={MAX_MODES} modes, got {n}"
        )));
    }
    let dim = 1usize << n;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut ops = vec![Monomial::identity(dim); 2 * n];
    for k in 0..n {
        let bit = 1usize << k;
        let mut first = Vec::with_capacity(dim);
        let mut second = Vec::with_capacity(dim);
        for x in 0..dim {
            let string = if (x & (bit - 1)).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let occupied = x & bit != 0;
            first.push(C64::new(string * r, 0.0));
            // c_k fills mode k, c_k^* empties it.
            let s = if occupied { -1.0 } else { 1.0 };
            second.push(C64::new(0.0, s * string * r));
        }
        ops[k] = Monomial {
            flip: bit,
            coeff: first,
        };
        ops[k + n] = Monomial {
            flip: bit,
            coeff: second,
        };
    }
    Ok(MajoranaSet { modes: n, ops })
}

impl MajoranaSet {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn hilbert_dim(&self) -> usize {
        1 << self.modes
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Dense `B_a`.
    pub fn op(&self, a: usize) -> DenseOperator {
        self.ops[a].dense()
    }

    /// `B(x) = sum_a x_a B_a`.
    pub fn field(&self, x: &[C64]) -> DenseOperator {
        let dim = self.hilbert_dim();
        let mut out = DenseOperator::zeros(dim, dim);
        for (a, &xa) in x.iter().enumerate() {
            if xa != C64::new(0.0, 0.0) {
                self.ops[a].add_to(xa, &mut out);
            }
        }
        out
    }

    fn product(&self, indices: &[usize]) -> Monomial {
        let mut m = Monomial::identity(self.hilbert_dim());
        for &a in indices {
            m = m.mul(&self.ops[a]);
        }
        m
    }

    /// Ordered product `B_{i_1} ... B_{i_k}` as a dense matrix.
    pub fn monomial(&self, indices: &[usize]) -> DenseOperator {
        self.product(indices).dense()
    }

    /// Largest deviation from `{B_a, B_b} = delta_ab I` and `B_a = B_a^dagger`.
    pub fn car_residual(&self) -> f64 {
        let dim = self.hilbert_dim();
        let id = DenseOperator::identity(dim, dim);
        let dense: Vec<DenseOperator> = (0..self.len()).map(|a| self.op(a)).collect();
        let mut worst = 0.0f64;
        for a in 0..dense.len() {
            worst = worst.max((&dense[a] - dense[a].adjoint()).camax());
            for b in a..dense.len() {
                let anti = &dense[a] * &dense[b] + &dense[b] * &dense[a];
                let expected = if a == b { id.clone() } else { DenseOperator::zeros(dim, dim) };
                worst = worst.max((anti - expected).camax());
            }
        }
        worst
    }
}

/// Dimension of the space of operators commuting with every `B_a`; equals
/// one exactly when the representation is irreducible. Limited to `n <= 4`.
pub fn commutant_dimension(set: &MajoranaSet) -> Result<usize> {
    if set.modes() > 4 {
        return Err(Error::InvalidParameter(
            "commutant check limited to 4 modes".into(),
        ));
    }
    let d = set.hilbert_dim();
    let id = DenseOperator::identity(d, d);
    let mut rows = DenseOperator::zeros(set.len() * d * d, d * d);
    for a in 0..set.len() {
        let b = set.op(a);
        // vec(B X - X B) = (I (x) B - B^T (x) I) vec(X)
        let block = id.kronecker(&b) - b.transpose().kronecker(&id);
        rows.view_mut((a * d * d, 0), (d * d, d * d)).copy_from(&block);
    }
    let sv = rows.singular_values();
    let smax = sv.max();
    Ok(sv.iter().filter(|&&s| s <= 1e-10 * smax.max(1.0)).count())
}

/// Parity operator `orientation * 2^n i^n B_0 ... B_{2n-1}`.
pub fn parity_operator(set: &MajoranaSet, orientation: Orientation) -> DenseOperator {
    let n = set.modes();
    let all: Vec<usize> = (0..set.len()).collect();
    let prefactor = C64::new(0.0, 1.0).powu(n as u32) * 2f64.powi(n as i32) * orientation.sign();
    set.product(&all).scale(prefactor).dense()
}

/// `2^n i^n B(R e_0) ... B(R e_{2n-1})` for a real orthogonal `r`.
pub fn parity_operator_in_basis(set: &MajoranaSet, r: &DMatrix<f64>) -> DenseOperator {
    let n = set.modes();
    let d = set.hilbert_dim();
    let mut out = DenseOperator::identity(d, d);
    for a in 0..set.len() {
        let col: Vec<C64> = r.column(a).iter().map(|&x| C64::new(x, 0.0)).collect();
        out *= set.field(&col);
    }
    out * (C64::new(0.0, 1.0).powu(n as u32) * 2f64.powi(n as i32))
}

/// Dense density operator of the quasifree state with covariance `s`,
/// expanded over all even Majorana monomials with Wick-theorem weights.
pub fn density_from_covariance(s: &CovarianceMatrix) -> Result<DenseOperator> {
    let set = majorana_ops(s.modes())?;
    let rho = density_with(&set, s);
    check_density(&rho)?;
    Ok(rho)
}

fn density_with(set: &MajoranaSet, s: &CovarianceMatrix) -> DenseOperator {
    let d = set.hilbert_dim();
    let k = set.len();
    let e = s.entries();
    let mut rho = DenseOperator::zeros(d, d);
    let mut idx = Vec::with_capacity(k);
    for subset in 0usize..(1 << k) {
        if subset.count_ones() % 2 == 1 {
            continue;
        }
        idx.clear();
        idx.extend((0..k).filter(|&a| subset & (1 << a) != 0));
        // Wick value of <B_{a_1} ... B_{a_r}>: Pfaffian of the two-point table.
        let r = idx.len();
        let c = DMatrix::<C64>::from_fn(r, r, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => e[(idx[i], idx[j])],
            std::cmp::Ordering::Greater => -e[(idx[j], idx[i])],
            std::cmp::Ordering::Equal => C64::new(0.0, 0.0),
        });
        let wick = pfaffian_unchecked(c);
        if wick.norm() == 0.0 {
            continue;
        }
        let m = set.product(&idx);
        let weight = wick / m.trace_of_square();
        m.add_to(weight, &mut rho);
    }
    rho
}

/// Unit trace, Hermitian and positive semidefinite to `1e-9`.
pub fn check_density(rho: &DenseOperator) -> Result<()> {
    let herm = (rho - rho.adjoint()).camax();
    let tr = rho.trace();
    if herm > 1e-9 || (tr - C64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::InvalidCovariance(format!(
            "density not Hermitian/normalized: hermiticity {herm:.3e}, trace {tr}"
        )));
    }
    let h = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let lo = h.symmetric_eigenvalues().min();
    if lo < -1e-9 {
        return Err(Error::InvalidCovariance(format!(
            "density has negative eigenvalue {lo:.3e}"
        )));
    }
    Ok(())
}

/// Fock vector of a basis projection: the common null vector of all `B(f)`
/// with `f` in `ker E`. The global phase makes the largest component real
/// and positive.
pub fn fock_vector(e: &BasisProjection) -> Result<DVector<C64>> {
    let set = majorana_ops(e.modes())?;
    fock_vector_with(&set, e)
}

fn fock_vector_with(set: &MajoranaSet, e: &BasisProjection) -> Result<DVector<C64>> {
    let d = set.hilbert_dim();
    let eig = e.covariance().entries().clone().symmetric_eigen();
    let mut h = DenseOperator::zeros(d, d);
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < 0.5 {
            let f: Vec<C64> = eig.eigenvectors.column(j).iter().copied().collect();
            let b = set.field(&f);
            h += b.adjoint() * &b;
        }
    }
    let he = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| he.eigenvalues[i].total_cmp(&he.eigenvalues[j]));
    let null = he
        .eigenvalues
        .iter()
        .filter(|&&x| x.abs() <= 1e-8)
        .count();
    if null != 1 {
        return Err(Error::NullSpaceDimension(null));
    }
    let mut v: DVector<C64> = he.eigenvectors.column(order[0]).into_owned();
    let (imax, _) = v
        .iter()
        .enumerate()
        .map(|(i, z)| (i, z.norm()))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let phase = v[imax].conj() / v[imax].norm();
    v *= phase;
    Ok(v)
}

/// `<v, A v>`.
pub fn expectation(v: &DVector<C64>, a: &DenseOperator) -> C64 {
    v.dotc(&(a * v))
}

/// Outcome probabilities and post-measurement operators of the joint
/// parity measurement `P_jk = (I + j theta_A)(I + k theta_B)/4`.
#[derive(Debug, Clone)]
pub struct JointParity {
    /// Indexed `[j][k]` with `0 = +`, `1 = -`.
    pub probabilities: [[f64; 2]; 2],
    pub projections: [[DenseOperator; 2]; 2],
    pub posteriors: [[DenseOperator; 2]; 2],
}

impl JointParity {
    pub fn equal_outcomes(&self) -> f64 {
        self.probabilities[0][0] + self.probabilities[1][1]
    }
}

/// `theta_A = 2^{k/2} i^{k/2} prod_{a in A} B_a` (in the split's order) and
/// `theta_B = theta theta_A`.
pub fn local_parities(
    set: &MajoranaSet,
    split: &BipartiteSplit,
    orientation: Orientation,
) -> Result<(DenseOperator, DenseOperator)> {
    let ka = split.a().len();
    if ka % 2 == 1 {
        return Err(Error::InvalidSplit(format!(
            "Alice needs an even number of Majorana indices, got {ka}"
        )));
    }
    let h = ka / 2;
    let prefactor = C64::new(0.0, 1.0).powu(h as u32) * 2f64.powi(h as i32);
    let theta_a = set.product(split.a()).scale(prefactor).dense();
    let theta_b = parity_operator(set, orientation) * &theta_a;
    Ok((theta_a, theta_b))
}

pub fn joint_parity(
    set: &MajoranaSet,
    rho: &DenseOperator,
    split: &BipartiteSplit,
    orientation: Orientation,
) -> Result<JointParity> {
    split.check_dim(set.len())?;
    let d = set.hilbert_dim();
    let (ta, tb) = local_parities(set, split, orientation)?;
    let id = DenseOperator::identity(d, d);
    let quarter = C64::new(0.25, 0.0);
    let proj = |j: f64, k: f64| (&id + &ta * C64::new(j, 0.0)) * (&id + &tb * C64::new(k, 0.0)) * quarter;
    let projections = [
        [proj(1.0, 1.0), proj(1.0, -1.0)],
        [proj(-1.0, 1.0), proj(-1.0, -1.0)],
    ];
    let mut probabilities = [[0.0; 2]; 2];
    let mut posteriors: [[DenseOperator; 2]; 2] = Default::default();
    for j in 0..2 {
        for k in 0..2 {
            let p = &projections[j][k];
            probabilities[j][k] = (p * rho).trace().re;
            posteriors[j][k] = p * rho * p;
        }
    }
    let total: f64 = probabilities.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::ProbabilitySum(total));
    }
    Ok(JointParity {
        probabilities,
        projections,
        posteriors,
    })
}

/// Largest deviations between the Pfaffian formulas and brute force.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub modes: usize,
    /// Density operator checks (trace, hermiticity, positivity) passed.
    pub density_ok: bool,
    /// `max |tr(rho B_a B_b) - S_ab|`.
    pub two_point: f64,
    /// Parity expectation: `|tr(rho theta) - (-1)^n Pf(G)|`.
    pub parity_trace: f64,
    /// Fidelity: `|<psi_E, rho psi_E> - Pf(-i(I - S - E))|`.
    pub fidelity: f64,
    /// Equal-outcome probability vs the parity measurement, when defined.
    pub probability: Option<f64>,
    /// Output fidelity vs posterior overlaps, when `E` is maximally
    /// entangled across the split.
    pub output_fidelity: Option<f64>,
    pub max_deviation: f64,
}

/// Runs every brute-force check on `(s, e, split)`; at most 6 modes.
pub fn verify_all(s: &CovarianceMatrix, e: &BasisProjection, split: &BipartiteSplit) -> Result<OracleReport> {
    let n = s.modes();
    if n > 6 {
        return Err(Error::InvalidParameter(format!(
            "verification limited to 6 modes, got {n}"
        )));
    }
    if e.modes() != n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            found: e.covariance().dim(),
        });
    }
    split.check_dim(2 * n)?;
    let set = majorana_ops(n)?;
    let rho = density_with(&set, s);
    let density_ok = check_density(&rho).is_ok();

    let mut two_point = 0.0f64;
    for a in 0..2 * n {
        for b in 0..2 * n {
            let v = (&rho * set.monomial(&[a, b])).trace();
            two_point = two_point.max((v - s.entries()[(a, b)]).norm());
        }
    }

    let theta = parity_operator(&set, Orientation::Positive);
    let parity_trace =
        ((&rho * &theta).trace() - C64::new(parity_expectation(s, Orientation::Positive)?, 0.0)).norm();

    let psi = fock_vector_with(&set, e)?;
    let overlap = expectation(&psi, &rho);
    let fidelity = (overlap - C64::new(fock_fidelity(s, e)?, 0.0)).norm();

    // Orient theta so the target has parity +1.
    let target_parity = expectation(&psi, &theta).re;
    let theta_orientation = Orientation::from_sign(target_parity);

    let mut probability = None;
    let mut output_fidelity = None;
    if n % 2 == 0 && split.a().len() % 2 == 0 {
        let m = n / 2;
        let jp = joint_parity(&set, &rho, split, theta_orientation)?;
        let p_orientation = if m % 2 == 1 {
            theta_orientation.flip()
        } else {
            theta_orientation
        };
        let p = parity_probability(s, p_orientation)?;
        probability = Some((jp.equal_outcomes() - p).abs());

        let b = blocks(e.covariance(), split)?;
        let maximally_entangled = split.is_balanced()
            && b.x.amax() <= STRUCTURE_TOL
            && b.z.amax() <= STRUCTURE_TOL;
        if maximally_entangled && p > 1e-12 {
            let tilde = tilde_projection(e, split)?;
            let formula = (fock_fidelity(s, e)? + fock_fidelity(s, &tilde)?) / p;
            let pp = &jp.projections[0][0] * &psi;
            let mm = &jp.projections[1][1] * &psi;
            let brute = 2.0 * (expectation(&pp, &rho).re + expectation(&mm, &rho).re) / p;
            output_fidelity = Some((formula - brute).abs());
        }
    }

    let max_deviation = [Some(two_point), Some(parity_trace), Some(fidelity), probability, output_fidelity]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max);
    Ok(OracleReport {
        modes: n,
        density_ok,
        two_point,
        parity_trace,
        fidelity,
        probability,
        output_fidelity,
        max_deviation,
    })
}
