//! Partial SVD of a Toeplitz kernel by block Golub–Kahan bidiagonalization.
//!
//! The block size is two so each step costs one complex FFT pair and exact
//! double singular values (which `F_r` has for even `L` and odd `r`) are
//! resolved.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kernel::ToeplitzKernel;
use crate::error::{Error, Result};
use crate::linalg::svd;

pub const BLOCK: usize = 2;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 300;

/// Relative norm below which a new Krylov direction counts as deflated.
const DEFLATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PartialSvd {
    pub triplets: Vec<SingularTriplet>,
    /// Block steps taken.
    pub iterations: usize,
    /// `max(|F v - s u|, |F^T u - s v|)` per triplet, from explicit products.
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-pass classical Gram–Schmidt of `w` against `basis`; returns the
/// accumulated coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, q) in coeffs.iter_mut().zip(basis) {
            let h = dot(q, w);
            axpy(-h, q, w);
            *c += h;
        }
    }
    coeffs
}

/// Appends the orthonormalized columns of `block` to `basis` and returns the
/// coefficient matrix `basis^T block` (rows for all basis vectors, including
/// the new ones). Deflated directions are replaced by random vectors with zero
/// coefficient; if the space is exhausted the column is dropped.
fn extend(basis: &mut Vec<Vec<f64>>, block: Vec<Vec<f64>>, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let l = block.first().map_or(0, |b| b.len());
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    for mut w in block {
        let mut c = orthogonalize(basis, &mut w);
        let nw = norm(&w);
        if nw > DEFLATION_TOL * scale {
            c.push(nw);
            w.iter_mut().for_each(|x| *x /= nw);
            basis.push(w);
        } else if basis.len() < l {
            let mut r: Vec<f64> = (0..l).map(|_| StandardNormal.sample(rng)).collect();
            orthogonalize(basis, &mut r);
            let nr = norm(&r);
            if nr > 1e-8 * (l as f64).sqrt() {
                r.iter_mut().for_each(|x| *x /= nr);
                basis.push(r);
                c.push(0.0);
            }
        }
        coeffs.push(c);
    }
    let rows = basis.len();
    let mut out = DMatrix::zeros(rows, coeffs.len());
    for (j, c) in coeffs.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

fn apply(kernel: &ToeplitzKernel, block: &[Vec<f64>], transpose: bool) -> Vec<Vec<f64>> {
    let l = kernel.len();
    let zero = vec![0.0; l];
    let mut out = Vec::with_capacity(block.len());
    for pair in block.chunks(2) {
        let y = pair.get(1).unwrap_or(&zero);
        let (fx, fy) = kernel
            .matvec_pair(&pair[0], y, transpose)
            .expect("basis vectors have kernel length");
        out.push(fx);
        if pair.len() == 2 {
            out.push(fy);
        }
    }
    out
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis.first().map_or(0, |b| b.len())];
    for (q, c) in basis.iter().zip(coeffs) {
        axpy(*c, q, &mut out);
    }
    out
}

/// Top `k` singular triplets of `F`, in decreasing order.
pub fn top_singular_triplets(
    kernel: &ToeplitzKernel,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<PartialSvd> {
    let l = kernel.len();
    if k == 0 || k > l {
        return Err(Error::InvalidParameter(format!("need 1 <= k <= L, got k = {k}, L = {l}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = BLOCK.min(l);
    let start: Vec<Vec<f64>> = (0..width)
        .map(|_| (0..l).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = Vec::new();
    extend(&mut vs, start, 1.0, &mut rng);

    // b = U^T F V over the columns built so far.
    let mut b = DMatrix::<f64>::zeros(0, 0);
    let mut scale = 0.0f64;
    let mut v_done = 0;
    let mut worst = f64::INFINITY;
    let mut iterations = 0;
    for iter in 1..=max_iter {
        iterations = iter;
        let block: Vec<Vec<f64>> = vs[v_done..].to_vec();
        if block.is_empty() {
            break;
        }
        let fv = apply(kernel, &block, false);
        scale = scale.max(fv.iter().map(|x| norm(x)).fold(0.0, f64::max));
        let u_before = us.len();
        let c = extend(&mut us, fv, scale, &mut rng);
        let (rows, cols) = (us.len(), vs.len());
        let mut grown = DMatrix::zeros(rows, cols);
        grown.view_mut((0, 0), (b.nrows(), b.ncols())).copy_from(&b);
        grown.view_mut((0, v_done), (c.nrows(), c.ncols())).copy_from(&c);
        b = grown;
        v_done = vs.len();

        let u_block: Vec<Vec<f64>> = us[u_before..].to_vec();
        let ftu = apply(kernel, &u_block, true);
        let v_before = vs.len();
        let s = extend(&mut vs, ftu, scale, &mut rng);

        // Ritz pairs of b; F^T u - s v = V_next S p_last.
        let dec = svd(&b)?;
        let kk = k.min(dec.singular_values.len());
        let s_next = s.rows(v_before, vs.len() - v_before).into_owned();
        let sigma1 = dec.singular_values.get(0).copied().unwrap_or(0.0);
        worst = 0.0;
        for i in 0..kk {
            let p_last = dec.u.view((u_before, i), (us.len() - u_before, 1));
            let res = (&s_next * p_last).norm();
            worst = worst.max(res);
        }
        let exhausted = vs.len() == v_before;
        if kk == k && (worst <= tol * sigma1 || exhausted) {
            return finish(kernel, &us, &vs, &dec, k, iter);
        }
        if exhausted {
            break;
        }
    }
    Err(Error::NotConverged {
        iterations,
        residual: worst,
    })
}

fn finish(
    kernel: &ToeplitzKernel,
    us: &[Vec<f64>],
    vs: &[Vec<f64>],
    dec: &crate::linalg::Svd<f64>,
    k: usize,
    iterations: usize,
) -> Result<PartialSvd> {
    let nv = dec.v.nrows();
    let mut triplets = Vec::with_capacity(k);
    for i in 0..k {
        let p: Vec<f64> = dec.u.column(i).iter().copied().collect();
        let q: Vec<f64> = dec.v.column(i).iter().copied().collect();
        let mut u = combine(us, &p);
        let mut v = combine(&vs[..nv], &q);
        let nu = norm(&u);
        let nv_ = norm(&v);
        u.iter_mut().for_each(|x| *x /= nu);
        v.iter_mut().for_each(|x| *x /= nv_);
        triplets.push(SingularTriplet {
            sigma: dec.singular_values[i],
            u,
            v,
        });
    }
    let mut residuals = Vec::with_capacity(k);
    for pair in triplets.chunks(2) {
        let vs_: Vec<Vec<f64>> = pair.iter().map(|t| t.v.clone()).collect();
        let us_: Vec<Vec<f64>> = pair.iter().map(|t| t.u.clone()).collect();
        let fv = apply(kernel, &vs_, false);
        let ftu = apply(kernel, &us_, true);
        for (j, t) in pair.iter().enumerate() {
            let r1: f64 = fv[j].iter().zip(&t.u).map(|(a, b)| (a - t.sigma * b).powi(2)).sum();
            let r2: f64 = ftu[j].iter().zip(&t.v).map(|(a, b)| (a - t.sigma * b).powi(2)).sum();
            residuals.push(r1.sqrt().max(r2.sqrt()));
        }
    }
    Ok(PartialSvd {
        triplets,
        iterations,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::kernel::kernel;

    fn dense_top(k: &ToeplitzKernel, n: usize) -> Vec<f64> {
        let s = svd(&k.dense()).unwrap();
        s.singular_values.iter().take(n).copied().collect()
    }

    #[test]
    fn matches_dense_top_two() {
        for n in [0usize, 1, 10] {
            let f = kernel(128, (n + 128) as i64);
            let res = top_singular_triplets(&f, 2, DEFAULT_TOL, DEFAULT_MAX_ITER, 3).unwrap();
            let dense = dense_top(&f, 2);
            for (t, d) in res.triplets.iter().zip(&dense) {
                assert!((t.sigma - d).abs() < 1e-8, "{} vs {}", t.sigma, d);
            }
        }
    }

    #[test]
    fn matches_dense_top_four_up_to_512() {
        for l in [32usize, 64, 127, 256, 512] {
            for n in [0usize, 1, 7, 10, 100] {
                let f = kernel(l, (n + l) as i64);
                let res = top_singular_triplets(&f, 4, DEFAULT_TOL, DEFAULT_MAX_ITER, 11).unwrap();
                let dense = dense_top(&f, 4);
                let s1 = dense[0];
                for (i, (t, d)) in res.triplets.iter().zip(&dense).enumerate() {
                    assert!((t.sigma - d).abs() < 1e-8, "L={l} N={n} i={i}: {} vs {}", t.sigma, d);
                    assert!(res.residuals[i] <= 1e-8 * s1);
                    assert!((norm(&t.u) - 1.0).abs() < 1e-10);
                    assert!((norm(&t.v) - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn singular_values_bounded_by_half() {
        for (l, n) in [(50usize, 0usize), (200, 0), (200, 3)] {
            let f = kernel(l, (n + l) as i64);
            let res = top_singular_triplets(&f, 1, DEFAULT_TOL, DEFAULT_MAX_ITER, 0).unwrap();
            assert!(res.triplets[0].sigma <= 0.5 + 1e-10);
        }
        // F_0 itself (distance -L) is the full block correlation.
        let s = dense_top(&kernel(200, 0), 1)[0];
        assert!(s <= 0.5 + 1e-10);
    }

    #[test]
    fn deterministic_per_seed() {
        let f = kernel(300, 301);
        let a = top_singular_triplets(&f, 4, DEFAULT_TOL, DEFAULT_MAX_ITER, 5).unwrap();
        let b = top_singular_triplets(&f, 4, DEFAULT_TOL, DEFAULT_MAX_ITER, 5).unwrap();
        for (x, y) in a.triplets.iter().zip(&b.triplets) {
            assert_eq!(x.sigma.to_bits(), y.sigma.to_bits());
            assert_eq!(x.u, y.u);
            assert_eq!(x.v, y.v);
        }
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn tiny_kernels_exhaust_the_space() {
        for l in [1usize, 2, 3, 5, 8] {
            let f = kernel(l, 1);
            let k = l.min(2);
            let res = top_singular_triplets(&f, k, DEFAULT_TOL, 50, 1).unwrap();
            let dense = dense_top(&f, k);
            for (t, d) in res.triplets.iter().zip(&dense) {
                assert!((t.sigma - d).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let f = kernel(400, 401);
        match top_singular_triplets(&f, 4, 1e-15, 2, 1) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
