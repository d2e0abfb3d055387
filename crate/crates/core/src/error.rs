use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix dimension {0} is odd; a Pfaffian needs an even dimension")]
    OddDimension(usize),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not antisymmetric: max |A + A^T| = {residual:e} exceeds {tolerance:e}")]
    NotAntisymmetric { residual: f64, tolerance: f64 },

    #[error("non-finite matrix entry")]
    NonFinite,

    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),

    #[error("invalid bipartite split: {0}")]
    InvalidSplit(String),

    #[error("invalid projection: {0}")]
    InvalidProjection(String),

    #[error("invalid partial isometry: {0}")]
    InvalidIsometry(String),

    #[error("imaginary residue {residue:e} in a block that must be real (basis convention?)")]
    ImaginaryResidue { residue: f64 },

    #[error("probability {0} outside [0, 1] beyond tolerance (orientation bug?)")]
    ProbabilityOutOfRange(f64),

    #[error("fidelity has imaginary part {0:e}")]
    ComplexFidelity(f64),

    #[error("{formula_a} and {formula_b} disagree by {difference:e}")]
    FormulaMismatch {
        formula_a: &'static str,
        formula_b: &'static str,
        difference: f64,
    },

    #[error("twirl coefficient {name} = {value:e} is negative")]
    NegativeTwirlCoefficient { name: &'static str, value: f64 },

    #[error("probability p = {0} must be positive")]
    NonPositiveProbability(f64),

    #[error("value {0} outside [0, 1]")]
    OutOfUnitInterval(f64),

    #[error("insufficient rank: singular value {index} is {value:e} (tolerance {tolerance:e})")]
    InsufficientRank {
        index: usize,
        value: f64,
        tolerance: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operator is not positive semidefinite: min eigenvalue {0:e}")]
    NotPositive(f64),

    #[error("expected a one-dimensional null space, found dimension {0}")]
    NullSpaceDimension(usize),

    #[error("probabilities sum to {0}, not 1")]
    ProbabilitySum(f64),

    #[error("Lanczos did not converge after {iterations} blocks; worst residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("target fidelity {target} unreachable for L <= {l_hi} (f = {reached})")]
    TargetUnreachable { target: f64, l_hi: usize, reached: f64 },

    #[error("fit needs at least 3 usable points, found {0}")]
    TooFewPoints(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
