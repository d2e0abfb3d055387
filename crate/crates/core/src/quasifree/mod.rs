//! Covariance-matrix data model for quasifree states and the single-state
//! formulas built on it.
//!
//! All covariance matrices are expressed in a real basis of the reference
//! space, so the conjugation acts as entrywise complex conjugation. A valid
//! covariance then has the form `S = I/2 + (i/2) G` with `G` real
//! antisymmetric and `||G|| <= 1`; `G` is stored alongside `S` and is what
//! most formulas consume.

mod formulas;
mod io;

pub use formulas::*;
pub use io::{read_covariance, write_covariance, CovarianceFile};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{column_span_basis, C64};

/// Structural tolerance used by validation and block extraction.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Sign convention for the parity operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Orientation {
    #[default]
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    /// `Negative` for strictly negative input, `Positive` otherwise.
    pub fn from_sign(x: f64) -> Self {
        if x < 0.0 {
            Orientation::Negative
        } else {
            Orientation::Positive
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

/// Hermitian `2n x 2n` covariance matrix of an `n`-mode quasifree state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<C64>,
    gamma: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Validates `entries` and wraps them.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let report = validate(&entries);
        if !report.is_valid() {
            return Err(Error::InvalidCovariance(report.to_string()));
        }
        let gamma = entries.map(|z| 2.0 * z.im);
        Ok(Self { entries, gamma })
    }

    /// Builds `S = I/2 + (i/2) G` from a real antisymmetric `G`.
    pub fn from_gamma(gamma: DMatrix<f64>) -> Result<Self> {
        let n = gamma.nrows();
        let entries = DMatrix::from_fn(n, gamma.ncols(), |i, j| {
            C64::new(if i == j { 0.5 } else { 0.0 }, 0.5 * gamma[(i, j)])
        });
        let s = Self::new(entries)?;
        Ok(s)
    }

    /// `I/2`, the maximally mixed state.
    pub fn maximally_mixed(modes: usize) -> Self {
        Self::from_gamma(DMatrix::zeros(2 * modes, 2 * modes)).expect("I/2 is valid")
    }

    pub fn modes(&self) -> usize {
        self.entries.nrows() / 2
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    /// Real antisymmetric `G = -i(2S - I)`.
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `E^2 = E` within tolerance.
    pub fn is_pure(&self) -> bool {
        let e2 = &self.entries * &self.entries;
        (e2 - &self.entries).camax() <= STRUCTURE_TOL
    }
}

/// One violated invariant found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dim: usize,
    pub violations: Vec<Violation>,
    pub min_eigenvalue: Option<f64>,
    pub max_eigenvalue: Option<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{} (magnitude {:.3e})", v.invariant, v.magnitude))
            .collect();
        write!(f, "invalid: {}", parts.join("; "))
    }
}

/// Checks every covariance invariant and reports all violations. Never fails.
pub fn validate(entries: &DMatrix<C64>) -> ValidationReport {
    let mut violations = Vec::new();
    let (rows, cols) = entries.shape();
    let mut report = ValidationReport {
        dim: rows,
        violations: Vec::new(),
        min_eigenvalue: None,
        max_eigenvalue: None,
    };
    if rows != cols {
        violations.push(Violation {
            invariant: "square matrix",
            magnitude: rows.abs_diff(cols) as f64,
        });
        report.violations = violations;
        return report;
    }
    if rows == 0 || rows % 2 == 1 {
        violations.push(Violation {
            invariant: "even positive dimension",
            magnitude: rows as f64,
        });
        report.violations = violations;
        return report;
    }
    if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        violations.push(Violation {
            invariant: "finite entries",
            magnitude: f64::INFINITY,
        });
        report.violations = violations;
        return report;
    }

    let herm = (entries - entries.adjoint()).camax();
    if herm > STRUCTURE_TOL {
        violations.push(Violation {
            invariant: "Hermitian",
            magnitude: herm,
        });
    }
    let id = DMatrix::<C64>::identity(rows, rows);
    let conj = (entries.map(|z| z.conj()) - (&id - entries)).camax();
    if conj > STRUCTURE_TOL {
        violations.push(Violation {
            invariant: "conj(S) = I - S",
            magnitude: conj,
        });
    }
    let hermitian_part = (entries + entries.adjoint()) * C64::new(0.5, 0.0);
    let eig = hermitian_part.symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report.min_eigenvalue = Some(lo);
    report.max_eigenvalue = Some(hi);
    if lo < -STRUCTURE_TOL {
        violations.push(Violation {
            invariant: "eigenvalues >= 0",
            magnitude: -lo,
        });
    }
    if hi > 1.0 + STRUCTURE_TOL {
        violations.push(Violation {
            invariant: "eigenvalues <= 1",
            magnitude: hi - 1.0,
        });
    }
    report.violations = violations;
    report
}

/// Partition of the `2n` reference-space indices into Alice's set `A` and
/// Bob's complement `B`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BipartiteSplit {
    dim: usize,
    a: Vec<usize>,
    b: Vec<usize>,
}

impl BipartiteSplit {
    /// `a` lists Alice's indices (0-based); order is preserved and defines
    /// the ordering of the A-blocks.
    pub fn new(dim: usize, a: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for &i in &a {
            if i >= dim {
                return Err(Error::InvalidSplit(format!("index {i} out of range 0..{dim}")));
            }
            if seen[i] {
                return Err(Error::InvalidSplit(format!("index {i} repeated")));
            }
            seen[i] = true;
        }
        let b = (0..dim).filter(|&i| !seen[i]).collect();
        Ok(Self { dim, a, b })
    }

    /// Alice holds the first `na` indices.
    pub fn leading(dim: usize, na: usize) -> Result<Self> {
        Self::new(dim, (0..na.min(dim)).collect())
    }

    /// Equal halves: A = first half, B = second half.
    pub fn halves(dim: usize) -> Self {
        Self::leading(dim, dim / 2).expect("in range")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    pub fn is_balanced(&self) -> bool {
        self.a.len() == self.b.len()
    }

    /// Alice's indices followed by Bob's.
    pub fn ordering(&self) -> Vec<usize> {
        self.a.iter().chain(self.b.iter()).copied().collect()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: dim,
            });
        }
        Ok(())
    }
}

/// Real blocks `X = -i(2 S_AA - I)`, `Y = -2i S_AB`, `Z = -i(2 S_BB - I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecomposition {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

fn real_part_checked(m: DMatrix<C64>) -> Result<DMatrix<f64>> {
    let residue = m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if residue > STRUCTURE_TOL {
        return Err(Error::ImaginaryResidue { residue });
    }
    Ok(m.map(|z| z.re))
}

fn submatrix<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn blocks(s: &CovarianceMatrix, split: &BipartiteSplit) -> Result<BlockDecomposition> {
    split.check_dim(s.dim())?;
    let minus_i = C64::new(0.0, -1.0);
    let e = s.entries();
    let saa = submatrix(e, split.a(), split.a());
    let sbb = submatrix(e, split.b(), split.b());
    let sab = submatrix(e, split.a(), split.b());
    let ia = DMatrix::<C64>::identity(saa.nrows(), saa.nrows());
    let ib = DMatrix::<C64>::identity(sbb.nrows(), sbb.nrows());
    let x = real_part_checked((saa * C64::new(2.0, 0.0) - ia) * minus_i)?;
    let z = real_part_checked((sbb * C64::new(2.0, 0.0) - ib) * minus_i)?;
    let y = real_part_checked(sab * C64::new(0.0, -2.0))?;
    Ok(BlockDecomposition { x, y, z })
}

/// `G` of `s` permuted into Alice-first ordering.
pub fn gamma_in_split_order(s: &CovarianceMatrix, split: &BipartiteSplit) -> Result<DMatrix<f64>> {
    split.check_dim(s.dim())?;
    let ord = split.ordering();
    Ok(submatrix(s.gamma(), &ord, &ord))
}

/// Covariance matrix that is also a projection: the covariance of a pure
/// (Fock) quasifree state.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisProjection(CovarianceMatrix);

impl BasisProjection {
    pub fn new(s: CovarianceMatrix) -> Result<Self> {
        let e = s.entries();
        let residual = (e * e - e).camax();
        if residual > STRUCTURE_TOL {
            return Err(Error::InvalidProjection(format!(
                "E^2 != E (residual {residual:.3e})"
            )));
        }
        Ok(Self(s))
    }

    pub fn from_gamma(gamma: DMatrix<f64>) -> Result<Self> {
        Self::new(CovarianceMatrix::from_gamma(gamma)?)
    }

    /// Maximally entangled target with `G = [[0, V], [-V^T, 0]]` in
    /// Alice-first ordering; `v` must be orthogonal.
    pub fn maximally_entangled(v: &DMatrix<f64>) -> Result<Self> {
        let k = v.nrows();
        if v.ncols() != k {
            return Err(Error::NotSquare {
                rows: k,
                cols: v.ncols(),
            });
        }
        let mut g = DMatrix::<f64>::zeros(2 * k, 2 * k);
        g.view_mut((0, k), (k, k)).copy_from(v);
        g.view_mut((k, 0), (k, k)).copy_from(&(-v.transpose()));
        Self::from_gamma(g)
    }

    pub fn covariance(&self) -> &CovarianceMatrix {
        &self.0
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        self.0.gamma()
    }

    pub fn modes(&self) -> usize {
        self.0.modes()
    }
}

/// Real projection `D = D_A (+) D_B` commuting with the split. `d_a` and
/// `d_b` are in split-local coordinates (rows/columns indexed like
/// `split.a()` and `split.b()`).
#[derive(Debug, Clone, PartialEq)]
pub struct RealProjection {
    pub d_a: DMatrix<f64>,
    pub d_b: DMatrix<f64>,
}

impl RealProjection {
    pub fn identity(na: usize, nb: usize) -> Self {
        Self {
            d_a: DMatrix::identity(na, na),
            d_b: DMatrix::identity(nb, nb),
        }
    }

    /// Projectors onto the column spans of orthonormal `qa`, `qb`.
    pub fn from_bases(qa: &DMatrix<f64>, qb: &DMatrix<f64>) -> Self {
        Self {
            d_a: qa * qa.transpose(),
            d_b: qb * qb.transpose(),
        }
    }

    /// Checks symmetry and idempotence; returns `(rank D_A, rank D_B)`.
    pub fn ranks(&self) -> Result<(usize, usize)> {
        let ra = projection_rank(&self.d_a, "D_A")?;
        let rb = projection_rank(&self.d_b, "D_B")?;
        Ok((ra, rb))
    }

    /// Orthonormal bases of `Ran D_A` and `Ran D_B`.
    pub fn bases(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (ra, rb) = self.ranks()?;
        let qa = column_span_basis(&self.d_a, 1e-6);
        let qb = column_span_basis(&self.d_b, 1e-6);
        if qa.ncols() != ra || qb.ncols() != rb {
            return Err(Error::InvalidProjection("range basis rank mismatch".into()));
        }
        Ok((qa, qb))
    }
}

fn projection_rank(d: &DMatrix<f64>, name: &str) -> Result<usize> {
    if d.nrows() != d.ncols() {
        return Err(Error::NotSquare {
            rows: d.nrows(),
            cols: d.ncols(),
        });
    }
    let sym = (d - d.transpose()).amax();
    let idem = (d * d - d).amax();
    if sym > STRUCTURE_TOL || idem > STRUCTURE_TOL {
        return Err(Error::InvalidProjection(format!(
            "{name}: symmetry residual {sym:.3e}, idempotence residual {idem:.3e}"
        )));
    }
    Ok(d.trace().round() as usize)
}

/// Checks `V V^T = D_A` and `V^T V = D_B`.
pub fn check_partial_isometry(v: &DMatrix<f64>, d: &RealProjection) -> Result<()> {
    if v.shape() != (d.d_a.nrows(), d.d_b.nrows()) {
        return Err(Error::InvalidIsometry(format!(
            "V is {}x{}, expected {}x{}",
            v.nrows(),
            v.ncols(),
            d.d_a.nrows(),
            d.d_b.nrows()
        )));
    }
    let ra = (v * v.transpose() - &d.d_a).amax();
    let rb = (v.transpose() * v - &d.d_b).amax();
    if ra > STRUCTURE_TOL || rb > STRUCTURE_TOL {
        return Err(Error::InvalidIsometry(format!(
            "VV^T - D_A residual {ra:.3e}, V^T V - D_B residual {rb:.3e}"
        )));
    }
    Ok(())
}

/// Compression of `s` to the span of the orthonormal real columns of `q`.
pub fn compress(s: &CovarianceMatrix, q: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    if q.nrows() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: q.nrows(),
        });
    }
    if q.ncols() % 2 == 1 {
        return Err(Error::OddDimension(q.ncols()));
    }
    let g = q.transpose() * s.gamma() * q;
    let g = (&g - g.transpose()) * 0.5;
    CovarianceMatrix::from_gamma(g)
}

/// Result of restricting a bipartite state to `Ran D`.
#[derive(Debug, Clone)]
pub struct Restriction {
    /// Covariance in the basis `(basis_a columns, basis_b columns)`.
    pub state: CovarianceMatrix,
    /// Alice-first split of the restricted state.
    pub split: BipartiteSplit,
    /// Orthonormal basis of `Ran D_A` (split-local coordinates).
    pub basis_a: DMatrix<f64>,
    /// Orthonormal basis of `Ran D_B` (split-local coordinates).
    pub basis_b: DMatrix<f64>,
}

/// Restricts `s` to `Ran D`, using an orthonormal basis obtained from the
/// columns of `D_A` and `D_B` in order.
pub fn restrict(s: &CovarianceMatrix, split: &BipartiteSplit, d: &RealProjection) -> Result<Restriction> {
    split.check_dim(s.dim())?;
    if d.d_a.nrows() != split.a().len() || d.d_b.nrows() != split.b().len() {
        return Err(Error::InvalidProjection("D does not match the split".into()));
    }
    let (qa, qb) = d.bases()?;
    restrict_to_bases(s, split, qa, qb)
}

/// Restriction with caller-supplied orthonormal bases of `Ran D_A`, `Ran D_B`.
pub fn restrict_to_bases(
    s: &CovarianceMatrix,
    split: &BipartiteSplit,
    basis_a: DMatrix<f64>,
    basis_b: DMatrix<f64>,
) -> Result<Restriction> {
    split.check_dim(s.dim())?;
    let ra = basis_a.ncols();
    let rb = basis_b.ncols();
    let mut w = DMatrix::<f64>::zeros(s.dim(), ra + rb);
    for (li, &gi) in split.a().iter().enumerate() {
        for c in 0..ra {
            w[(gi, c)] = basis_a[(li, c)];
        }
    }
    for (li, &gi) in split.b().iter().enumerate() {
        for c in 0..rb {
            w[(gi, ra + c)] = basis_b[(li, c)];
        }
    }
    let state = compress(s, &w)?;
    let split = BipartiteSplit::leading(ra + rb, ra)?;
    Ok(Restriction {
        state,
        split,
        basis_a,
        basis_b,
    })
}
