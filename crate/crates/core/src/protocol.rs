//! Optimal protocol construction, the `pf` bound, hashing rates and reports.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal_with, svd, RANK_TOL};
use crate::quasifree::{
    blocks, output_dimension, protocol_quantities, BipartiteSplit, CovarianceMatrix,
    ProtocolQuantities, RealProjection, STRUCTURE_TOL,
};
use crate::sampling::derive_seed;

/// Slack allowed when comparing `pf` with the bound.
pub const BOUND_TOL: f64 = 1e-9;

/// Relative gap below which `lambda_{2m}` and `lambda_{2m+1}` count as equal.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// `(m, D, V)`; `D` and `V` are in split-local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolChoice {
    pub m: usize,
    pub d: RealProjection,
    pub v: DMatrix<f64>,
}

/// Optimal choice with its diagnostics.
#[derive(Debug, Clone)]
pub struct OptimalChoice {
    pub choice: ProtocolChoice,
    /// All singular values of `Y`, decreasing.
    pub singular_values: Vec<f64>,
    pub warnings: Vec<String>,
}

impl OptimalChoice {
    /// The `2m` values entering the bound.
    pub fn lambdas(&self) -> &[f64] {
        &self.singular_values[..2 * self.choice.m]
    }
}

fn check_split(s: &CovarianceMatrix, split: &BipartiteSplit, m: usize) -> Result<()> {
    split.check_dim(s.dim())?;
    if !split.is_balanced() {
        return Err(Error::InvalidSplit(format!(
            "protocol needs equal halves, got |A| = {}, |B| = {}",
            split.a().len(),
            split.b().len()
        )));
    }
    let half = split.a().len();
    if m < 2 || 2 * m > half {
        return Err(Error::InvalidParameter(format!(
            "m = {m} outside 2..={}",
            half / 2
        )));
    }
    Ok(())
}

/// `D_B` projects onto the top-`2m` right singular vectors of `Y`, `D_A` onto
/// the matching left singular vectors, and `V = sum_k u_k v_k^T` is the polar
/// factor of `D_A Y D_B`.
pub fn optimal_choice(s: &CovarianceMatrix, split: &BipartiteSplit, m: usize) -> Result<OptimalChoice> {
    check_split(s, split, m)?;
    let y = blocks(s, split)?.y;
    let dec = svd(&y)?;
    let sv: Vec<f64> = dec.singular_values.iter().copied().collect();
    let k = 2 * m;
    let tol = RANK_TOL.max(sv[0] * RANK_TOL);
    if sv[k - 1] <= tol {
        return Err(Error::InsufficientRank {
            index: k,
            value: sv[k - 1],
            tolerance: tol,
        });
    }
    let mut warnings = Vec::new();
    if let Some(&next) = sv.get(k) {
        if (sv[k - 1] - next).abs() <= DEGENERACY_TOL * sv[0] {
            warnings.push(format!(
                "lambda_{k} = lambda_{} = {:.12}: choice of D depends on the solver basis",
                k + 1,
                next
            ));
        }
    }
    let u = dec.u.columns(0, k).into_owned();
    let w = dec.v.columns(0, k).into_owned();
    let choice = ProtocolChoice {
        m,
        d: RealProjection::from_bases(&u, &w),
        v: &u * w.transpose(),
    };
    Ok(OptimalChoice {
        choice,
        singular_values: sv,
        warnings,
    })
}

/// `prod (1 + lambda_k)/2 + prod (1 - lambda_k)/2`.
pub fn pf_upper_bound(lambdas: &[f64]) -> Result<f64> {
    for &l in lambdas {
        if !(-STRUCTURE_TOL..=1.0 + STRUCTURE_TOL).contains(&l) {
            return Err(Error::OutOfUnitInterval(l));
        }
    }
    let plus: f64 = lambdas.iter().map(|l| (1.0 + l) / 2.0).product();
    let minus: f64 = lambdas.iter().map(|l| (1.0 - l) / 2.0).product();
    Ok(plus + minus)
}

fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Hashing rate `p max{0, 1 + f log f + (1-f) log(1-f) - (1-f) log 3}`
/// (base-2 logarithms) for output qubit pairs.
pub fn hashing_rate(p: f64, f: f64) -> f64 {
    let bracket = 1.0 + xlog2x(f) + xlog2x(1.0 - f) - (1.0 - f) * 3f64.log2();
    p * bracket.max(0.0)
}

/// Serialized as a number, or the string `"undefined"` when `p = 0`.
fn serialize_fidelity<S: Serializer>(f: &Option<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    match f {
        Some(x) => ser.serialize_f64(*x),
        None => ser.serialize_str("undefined"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistillationReport {
    pub p: f64,
    #[serde(serialize_with = "serialize_fidelity")]
    pub f: Option<f64>,
    pub pf: f64,
    /// Only defined for `m = 2`.
    pub rate: Option<f64>,
    pub lambdas: Vec<f64>,
    pub m: usize,
    pub distillable: bool,
    pub bound: f64,
    pub warnings: Vec<String>,
}

/// Builds the report from evaluated quantities and the `2m` lambdas.
pub fn assemble_report(q: &ProtocolQuantities, lambdas: Vec<f64>, mut warnings: Vec<String>) -> Result<DistillationReport> {
    let m = q.m;
    let bound = pf_upper_bound(&lambdas)?;
    if q.pf > bound + BOUND_TOL {
        warnings.push(format!(
            "pf = {:.12} exceeds the bound {:.12} (state outside the X = 0 / Z = 0 hypothesis)",
            q.pf, bound
        ));
    }
    if q.pf_determinant.is_some() && (q.pf - bound).abs() > BOUND_TOL {
        return Err(Error::FormulaMismatch {
            formula_a: "pf",
            formula_b: "bound",
            difference: (q.pf - bound).abs(),
        });
    }
    let f = q.f.map(|f| f.min(1.0));
    let distillable = f.is_some_and(|f| f > 1.0 / output_dimension(m));
    let rate = if m == 2 {
        Some(f.map_or(0.0, |f| hashing_rate(q.p, f)))
    } else {
        None
    };
    Ok(DistillationReport {
        p: q.p,
        f,
        pf: q.pf,
        rate,
        lambdas,
        m,
        distillable,
        bound,
        warnings,
    })
}

/// Optimal protocol for `m`, evaluated and checked against the bound.
pub fn run_protocol(s: &CovarianceMatrix, split: &BipartiteSplit, m: usize) -> Result<DistillationReport> {
    let opt = optimal_choice(s, split, m)?;
    let q = protocol_quantities(s, split, &opt.choice.d, &opt.choice.v)?;
    assemble_report(&q, opt.lambdas().to_vec(), opt.warnings.clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub reports: Vec<DistillationReport>,
    /// Why the scan stopped before `m_max`, if it did.
    pub truncated: Option<String>,
}

/// Reports for `m = 2..=m_max`.
pub fn scan_m(s: &CovarianceMatrix, split: &BipartiteSplit, m_max: usize) -> Result<ScanResult> {
    split.check_dim(s.dim())?;
    let limit = split.a().len() / 2;
    if m_max > limit {
        return Err(Error::InvalidParameter(format!("m_max = {m_max} exceeds {limit}")));
    }
    let mut reports = Vec::new();
    let mut truncated = None;
    for m in 2..=m_max {
        match run_protocol(s, split, m) {
            Ok(r) => reports.push(r),
            Err(e @ Error::InsufficientRank { .. }) => {
                truncated = Some(format!("m = {m}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ScanResult { reports, truncated })
}

#[derive(Debug, Clone)]
pub struct SuboptimalResult {
    pub best_pf: f64,
    pub best_trial: usize,
    pub best: ProtocolChoice,
}

/// Random `(D, V)`: `D_A`, `D_B` project onto the first `2m` columns of Haar
/// orthogonal matrices, `V = Q_A O Q_B^T` with Haar `O`.
pub fn random_choice<R: rand::Rng + ?Sized>(na: usize, nb: usize, m: usize, rng: &mut R) -> ProtocolChoice {
    let k = 2 * m;
    let qa = random_orthogonal_with(na, rng).columns(0, k).into_owned();
    let qb = random_orthogonal_with(nb, rng).columns(0, k).into_owned();
    let o = random_orthogonal_with(k, rng);
    ProtocolChoice {
        m,
        d: RealProjection::from_bases(&qa, &qb),
        v: &qa * o * qb.transpose(),
    }
}

/// Best `pf` over random protocols. Trial `t` uses seed `derive_seed(seed, t)`;
/// with `forced`, trial 0 evaluates that choice instead.
pub fn sample_suboptimal(
    s: &CovarianceMatrix,
    split: &BipartiteSplit,
    m: usize,
    trials: usize,
    seed: u64,
    forced: Option<&ProtocolChoice>,
) -> Result<SuboptimalResult> {
    check_split(s, split, m)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let (na, nb) = (split.a().len(), split.b().len());
    let results: Vec<Result<(f64, usize, ProtocolChoice)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let choice = match (t, forced) {
                (0, Some(c)) => c.clone(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                    random_choice(na, nb, m, &mut rng)
                }
            };
            let q = protocol_quantities(s, split, &choice.d, &choice.v)?;
            Ok((q.pf, t, choice))
        })
        .collect();
    let mut best: Option<(f64, usize, ProtocolChoice)> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    let (best_pf, best_trial, best) = best.expect("trials >= 1");
    Ok(SuboptimalResult {
        best_pf,
        best_trial,
        best,
    })
}
