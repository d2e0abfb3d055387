//! Closed-form results for one mode per party and for two modes per party in
//! the commuting normal form.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quasifree::CovarianceMatrix;

/// One mode per party. In Alice-first order `(A1, A2, B1, B2)`:
/// `X = [[0, a], [-a, 0]]`, `Y = diag(c, d)`, `Z = [[0, b], [-b, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoModeParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl TwoModeParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// `a^2 + b^2 + c^2 + d^2 <= 2` and `<= 1 + (ab - cd)^2`.
    pub fn satisfies_constraint(&self) -> bool {
        let Self { a, b, c, d } = *self;
        let q = a * a + b * b + c * c + d * d;
        let tol = 1e-12;
        q <= 2.0 + tol && q <= 1.0 + (a * b - c * d).powi(2) + tol
    }

    pub fn gamma(&self) -> DMatrix<f64> {
        let Self { a, b, c, d } = *self;
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, a, c, 0.0, //
                -a, 0.0, 0.0, d, //
                -c, 0.0, 0.0, b, //
                0.0, -d, -b, 0.0,
            ],
        )
    }
}

pub fn two_mode_covariance(p: &TwoModeParams) -> Result<CovarianceMatrix> {
    CovarianceMatrix::from_gamma(p.gamma())
}

/// `r_ij = tr(rho sigma^i (x) sigma^j)`, `i, j = 0..3`, under the
/// identification `B(e_A^i) = sigma^i (x) 1 / sqrt 2`,
/// `B(e_B^i) = sigma^3 (x) sigma^i / sqrt 2`.
pub fn two_mode_correlation(p: &TwoModeParams) -> DMatrix<f64> {
    let TwoModeParams { a, b, c, d } = *p;
    let mut r = DMatrix::<f64>::zeros(4, 4);
    r[(0, 0)] = 1.0;
    r[(0, 3)] = b;
    r[(1, 2)] = d;
    r[(2, 1)] = -c;
    r[(3, 0)] = a;
    r[(3, 3)] = a * b - c * d;
    r
}

/// Maximal fidelity with a quasifree maximally entangled state and a
/// maximizing `Y` in `O(2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoModeMax {
    pub value: f64,
    pub optimizer: [[f64; 2]; 2],
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `max{1 - ab + cd + |c + d|, 1 + ab - cd + |c - d|}/4`, attained at
/// `sign(c + d) I` for the first branch and `sign(c - d) diag(1, -1)` for
/// the second. Ties go to the first branch.
pub fn two_mode_max_fidelity(p: &TwoModeParams) -> TwoModeMax {
    let TwoModeParams { a, b, c, d } = *p;
    let first = 1.0 - a * b + c * d + (c + d).abs();
    let second = 1.0 + a * b - c * d + (c - d).abs();
    if first >= second {
        let s = sign(c + d);
        TwoModeMax {
            value: first / 4.0,
            optimizer: [[s, 0.0], [0.0, s]],
        }
    } else {
        let s = sign(c - d);
        TwoModeMax {
            value: second / 4.0,
            optimizer: [[s, 0.0], [0.0, -s]],
        }
    }
}

/// Two modes per party with `Y = sigma I`, `X = nu_1 J (+) nu_2 J`,
/// `Z = nu_3 J (+) nu_4 J`, Alice holding indices `0..4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourModeParams {
    pub nu: [f64; 4],
    pub sigma: f64,
}

impl FourModeParams {
    pub fn new(nu1: f64, nu2: f64, nu3: f64, nu4: f64, sigma: f64) -> Self {
        Self {
            nu: [nu1, nu2, nu3, nu4],
            sigma,
        }
    }

    /// `nu_1 = nu_2 = x`, `nu_3 = nu_4 = y`.
    pub fn symmetric(x: f64, y: f64, sigma: f64) -> Self {
        Self::new(x, x, y, y, sigma)
    }

    pub fn gamma(&self) -> DMatrix<f64> {
        let mut g = DMatrix::<f64>::zeros(8, 8);
        for (k, &nu) in self.nu.iter().enumerate() {
            g[(2 * k, 2 * k + 1)] = nu;
            g[(2 * k + 1, 2 * k)] = -nu;
        }
        for i in 0..4 {
            g[(i, i + 4)] = self.sigma;
            g[(i + 4, i)] = -self.sigma;
        }
        g
    }

    fn products(&self) -> (f64, f64, f64) {
        let [n1, n2, n3, n4] = self.nu;
        (n1 * n3, n2 * n4, self.sigma * self.sigma)
    }
}

pub fn four_mode_covariance(p: &FourModeParams) -> Result<CovarianceMatrix> {
    CovarianceMatrix::from_gamma(p.gamma())
}

/// `(1 + (sigma^2 - nu_1 nu_3)(sigma^2 - nu_2 nu_4))/2`.
pub fn four_mode_p(p: &FourModeParams) -> f64 {
    let (q1, q2, s2) = p.products();
    (1.0 + (s2 - q1) * (s2 - q2)) / 2.0
}

fn nonzero_p(p: &FourModeParams) -> Result<f64> {
    let prob = four_mode_p(p);
    if prob <= 0.0 {
        return Err(Error::NonPositiveProbability(prob));
    }
    Ok(prob)
}

/// `((nu_1 nu_3 - sigma^2 - 1)(nu_2 nu_4 - sigma^2 - 1) + 4 sigma^2)/(8p)`.
pub fn four_mode_f(p: &FourModeParams) -> Result<f64> {
    let prob = nonzero_p(p)?;
    let (q1, q2, s2) = p.products();
    Ok(((q1 - s2 - 1.0) * (q2 - s2 - 1.0) + 4.0 * s2) / (8.0 * prob))
}

/// `(nu_1 nu_3 - sigma^2 + 1)(nu_2 nu_4 - sigma^2 + 1)/(8p)`.
pub fn four_mode_g(p: &FourModeParams) -> Result<f64> {
    let prob = nonzero_p(p)?;
    let (q1, q2, s2) = p.products();
    Ok((q1 - s2 + 1.0) * (q2 - s2 + 1.0) / (8.0 * prob))
}

pub fn max_singlet_fraction(p: &FourModeParams) -> Result<f64> {
    Ok(four_mode_f(p)?.max(four_mode_g(p)?))
}

/// One point of the `f` versus `g` comparison. `f`, `g` and the flag are
/// `None` when the parameters do not give a valid state with `p > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FgPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub f: Option<f64>,
    pub g: Option<f64>,
    pub f_ge_g: Option<bool>,
}

/// Grid over `nu_1 = nu_2 = x`, `nu_3 = nu_4 = y` at fixed `sigma`, rows
/// ordered by `x` then `y`.
pub fn f_vs_g_scan(xs: &[f64], ys: &[f64], sigma: f64) -> Vec<FgPoint> {
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &x in xs {
        for &y in ys {
            let params = FourModeParams::symmetric(x, y, sigma);
            let fg = four_mode_covariance(&params)
                .ok()
                .and_then(|_| Some((four_mode_f(&params).ok()?, four_mode_g(&params).ok()?)));
            out.push(FgPoint {
                x,
                y,
                sigma,
                f: fg.map(|v| v.0),
                g: fg.map(|v| v.1),
                f_ge_g: fg.map(|(f, g)| f >= g),
            });
        }
    }
    out
}

/// CSV with header `x,y,sigma,f,g,f_ge_g`; invalid points have empty `f`,
/// `g` and `f_ge_g = invalid`.
pub fn write_fg_csv<W: std::io::Write>(points: &[FgPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x", "y", "sigma", "f", "g", "f_ge_g"])?;
    for p in points {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let flag = match p.f_ge_g {
            Some(true) => "true".to_string(),
            Some(false) => "false".to_string(),
            None => "invalid".to_string(),
        };
        wtr.write_record([
            p.x.to_string(),
            p.y.to_string(),
            p.sigma.to_string(),
            opt(p.f),
            opt(p.g),
            flag,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
