use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::fit::{min_length, MinLength};
use super::kernel::{correlation, kernel};
use super::lanczos::{top_singular_triplets, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::protocol::{assemble_report, DistillationReport, ProtocolChoice, DEGENERACY_TOL};
use crate::quasifree::evaluate_restricted;
use crate::quasifree::{BipartiteSplit, CovarianceMatrix, RealProjection};
use crate::sampling::derive_seed;

/// Blocks `Lambda_A = [-L, 0)` and `Lambda_B = [N, N + L)` on the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeGeometry {
    l: usize,
    n: usize,
}

impl LatticeGeometry {
    pub fn new(l: usize, n: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidParameter(format!("block length L = {l} must be at least 2")));
        }
        Ok(Self { l, n })
    }

    pub fn block_length(&self) -> usize {
        self.l
    }

    pub fn distance(&self) -> usize {
        self.n
    }

    /// Site positions, Alice's block first.
    pub fn sites(&self) -> Vec<i64> {
        let l = self.l as i64;
        let n = self.n as i64;
        (-l..0).chain(n..n + l).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Master seed; each geometry derives its own start vector from it.
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

/// Seed of the start vector for one geometry.
pub fn point_seed(master: u64, geometry: &LatticeGeometry) -> u64 {
    derive_seed(derive_seed(master, geometry.l as u64), geometry.n as u64)
}

/// Covariance of the `2m + 2m` selected Majorana modes together with the
/// protocol in that frame (`D = I`, `V = I`).
#[derive(Debug, Clone)]
pub struct RestrictedLattice {
    pub state: CovarianceMatrix,
    pub choice: ProtocolChoice,
    /// Top singular values of `F_{N+L}`, `m + 1` of them when available.
    pub kernel_singular_values: Vec<f64>,
    /// `lambda_1..lambda_2m` of the off-diagonal block: `2 sigma_i`, each twice.
    pub lambdas: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Top-`m` triplets of `F_{N+L}` lifted to the real basis of the two blocks.
///
/// With Majoranas ordered (positions, momenta) per block, `G_AB = F^T` and
/// `F v_i = s_i u_i`, the vectors `(v_i, 0), (0, v_i)` on Alice's side and
/// `(0, -u_i), (u_i, 0)` on Bob's give `Y = diag(2 s_1, 2 s_1, 2 s_2, ...)`
/// and `X`, `Z` from the compressions of `F_0`.
pub fn restricted_covariance(geometry: &LatticeGeometry, m: usize, opts: &LanczosOptions) -> Result<RestrictedLattice> {
    let l = geometry.l;
    if m < 2 || m > l {
        return Err(Error::InvalidParameter(format!("m = {m} outside 2..={l}")));
    }
    let f = kernel(l, (geometry.n + l) as i64);
    let k = (m + 1).min(l);
    let svd = top_singular_triplets(&f, k, opts.tol, opts.max_iter, point_seed(opts.seed, geometry))?;
    let sigmas: Vec<f64> = svd.triplets.iter().map(|t| t.sigma).collect();
    let s1 = sigmas[0];
    let tol = crate::linalg::RANK_TOL.max(2.0 * s1 * crate::linalg::RANK_TOL);
    if 2.0 * sigmas[m - 1] <= tol {
        return Err(Error::InsufficientRank {
            index: 2 * m,
            value: 2.0 * sigmas[m - 1],
            tolerance: tol,
        });
    }
    let mut warnings = Vec::new();
    if let Some(&next) = sigmas.get(m) {
        if (sigmas[m - 1] - next).abs() <= DEGENERACY_TOL * s1 {
            warnings.push(format!(
                "lambda_{} = lambda_{} = {:.12}: choice of D depends on the solver basis",
                2 * m,
                2 * m + 1,
                2.0 * next
            ));
        }
    }

    let f0 = kernel(l, 0);
    let top = &svd.triplets[..m];
    let mut f0u = Vec::with_capacity(m);
    let mut f0v = Vec::with_capacity(m);
    for t in top {
        let (a, b) = f0.matvec_pair(&t.u, &t.v, false)?;
        f0u.push(a);
        f0v.push(b);
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let k2 = 2 * m;
    let mut g = DMatrix::<f64>::zeros(2 * k2, 2 * k2);
    for i in 0..m {
        for j in 0..m {
            let xa = 2.0 * dot(&top[i].v, &f0v[j]);
            g[(2 * i, 2 * j + 1)] = -xa;
            g[(2 * i + 1, 2 * j)] = xa;
            let zb = 2.0 * dot(&top[i].u, &f0u[j]);
            g[(k2 + 2 * i, k2 + 2 * j + 1)] = -zb;
            g[(k2 + 2 * i + 1, k2 + 2 * j)] = zb;
        }
        let y = 2.0 * top[i].sigma;
        for c in [2 * i, 2 * i + 1] {
            g[(c, k2 + c)] = y;
            g[(k2 + c, c)] = -y;
        }
    }
    let g = (&g - g.transpose()) * 0.5;
    let state = CovarianceMatrix::from_gamma(g)?;
    let lambdas = top.iter().flat_map(|t| [2.0 * t.sigma, 2.0 * t.sigma]).collect();
    Ok(RestrictedLattice {
        state,
        choice: ProtocolChoice {
            m,
            d: RealProjection::identity(k2, k2),
            v: DMatrix::identity(k2, k2),
        },
        kernel_singular_values: sigmas,
        lambdas,
        iterations: svd.iterations,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct LatticePoint {
    pub geometry: LatticeGeometry,
    pub report: DistillationReport,
    pub iterations: usize,
}

/// Protocol report for the blocks of `geometry`.
pub fn lattice_point(geometry: &LatticeGeometry, m: usize, opts: &LanczosOptions) -> Result<LatticePoint> {
    let r = restricted_covariance(geometry, m, opts)?;
    let q = evaluate_restricted(&r.state, &r.choice.v)?;
    let report = assemble_report(&q, r.lambdas, r.warnings)?;
    Ok(LatticePoint {
        geometry: *geometry,
        report,
        iterations: r.iterations,
    })
}

/// Full `4L x 4L` covariance of both blocks, Alice's Majoranas first, and the
/// matching split. Only sensible for small `L`.
pub fn dense_covariance(geometry: &LatticeGeometry) -> Result<(CovarianceMatrix, BipartiteSplit)> {
    let sites = geometry.sites();
    let l = geometry.l;
    let dim = 4 * l;
    // Majorana index of (site s, kind) with kind 0 = position, 1 = momentum.
    let index = |s: usize, kind: usize| {
        let (block, local) = (s / l, s % l);
        2 * l * block + kind * l + local
    };
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    for (s, &xs) in sites.iter().enumerate() {
        for (t, &xt) in sites.iter().enumerate() {
            let c = 2.0 * correlation(xs - xt);
            g[(index(s, 0), index(t, 1))] = -c;
            g[(index(s, 1), index(t, 0))] = c;
        }
    }
    let g = (&g - g.transpose()) * 0.5;
    Ok((CovarianceMatrix::from_gamma(g)?, BipartiteSplit::halves(dim)))
}

/// Same quantities through a dense SVD of the full off-diagonal block.
pub fn dense_lattice_point(geometry: &LatticeGeometry, m: usize) -> Result<DistillationReport> {
    let (s, split) = dense_covariance(geometry)?;
    crate::protocol::run_protocol(&s, &split, m)
}

/// Smallest block length in `[l_lo, l_hi]` reaching `f >= x` at distance `n`.
/// An undefined `f` (zero success probability) counts as `0`.
pub fn lattice_min_length(
    n: usize,
    x: f64,
    l_lo: usize,
    l_hi: usize,
    m: usize,
    opts: &LanczosOptions,
) -> Result<MinLength> {
    min_length(x, l_lo.max(2), l_hi, |l| {
        let point = lattice_point(&LatticeGeometry::new(l, n)?, m, opts)?;
        Ok(point.report.f.unwrap_or(0.0))
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub l: usize,
    pub n: usize,
    pub m: usize,
    pub outcome: std::result::Result<LatticePoint, String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub m: usize,
    pub lanczos: LanczosOptions,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// When false, `wall_ms` is zero so output is reproducible byte for byte.
    pub timing: bool,
}

/// Every `(L, N)` pair, `L` outermost. Points fail independently.
pub fn sweep(ls: &[usize], ns: &[usize], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if ls.is_empty() || ns.is_empty() {
        return Err(Error::InvalidParameter("sweep needs nonempty L and N lists".into()));
    }
    let points: Vec<(usize, usize)> = ls.iter().flat_map(|&l| ns.iter().map(move |&n| (l, n))).collect();
    let run = || -> Vec<SweepRow> {
        points
            .par_iter()
            .map(|&(l, n)| {
                let start = Instant::now();
                let outcome = LatticeGeometry::new(l, n)
                    .and_then(|g| lattice_point(&g, opts.m, &opts.lanczos))
                    .map_err(|e| e.to_string());
                let wall_ms = if opts.timing {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                SweepRow {
                    l,
                    n,
                    m: opts.m,
                    outcome,
                    wall_ms,
                }
            })
            .collect()
    };
    match opts.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(pool.install(run))
        }
        None => Ok(run()),
    }
}

pub fn sweep_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["L", "N", "p", "f", "pf", "rate"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=2 * m).map(|i| format!("sigma_{i}")));
    h.push("iters".into());
    h.push("wall_ms".into());
    h
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// CSV with the sweep header. A failed point keeps its `L, N`, puts
/// `error: <message>` in the `p` column and leaves the rest empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], m: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(sweep_header(m))?;
    for row in rows {
        let mut rec = vec![row.l.to_string(), row.n.to_string()];
        match &row.outcome {
            Ok(point) => {
                let r = &point.report;
                rec.push(num(r.p));
                rec.push(r.f.map_or_else(|| "undefined".to_string(), num));
                rec.push(num(r.pf));
                rec.push(r.rate.map_or_else(String::new, num));
                rec.extend(r.lambdas.iter().map(|&x| num(x)));
                rec.push(point.iterations.to_string());
            }
            Err(msg) => {
                rec.push(format!("error: {msg}"));
                rec.extend(std::iter::repeat_n(String::new(), 3 + 2 * m + 1));
            }
        }
        rec.push(format!("{:.3}", row.wall_ms));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
