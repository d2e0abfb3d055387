use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Ground-state correlation `sin(x pi/2)/(x pi)` with value `0` at `x = 0`.
pub fn correlation(x: i64) -> f64 {
    if x % 2 == 0 {
        return 0.0;
    }
    // sin(x pi/2) = +-1 for odd x.
    let s = if x.rem_euclid(4) == 1 { 1.0 } else { -1.0 };
    s / (x as f64 * std::f64::consts::PI)
}

/// Smallest `n >= target` of the form `2^a 3^b 5^c`.
pub fn next_smooth(target: usize) -> usize {
    let mut n = target.max(1);
    loop {
        let mut k = n;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return n;
        }
        n += 1;
    }
}

/// `L x L` Toeplitz matrix `(F_r)_{jk} = correlation(j - k + r)`, with a
/// precomputed circulant embedding for fast products.
#[derive(Clone)]
pub struct ToeplitzKernel {
    l: usize,
    r: i64,
    /// `values[d + L - 1] = F_{j,k}` for `d = j - k`.
    values: Vec<f64>,
    size: usize,
    spectrum: Arc<Vec<Complex<f64>>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ToeplitzKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzKernel")
            .field("l", &self.l)
            .field("r", &self.r)
            .field("circulant_size", &self.size)
            .finish()
    }
}

/// Kernel of `F_r` for block length `l`.
pub fn kernel(l: usize, r: i64) -> ToeplitzKernel {
    ToeplitzKernel::from_fn(l, r, |d| correlation(d + r))
}

impl ToeplitzKernel {
    /// Generic Toeplitz matrix with entries `t(j - k)`.
    pub fn from_fn(l: usize, r: i64, t: impl Fn(i64) -> f64) -> Self {
        assert!(l >= 1, "kernel needs L >= 1");
        let li = l as i64;
        let values: Vec<f64> = (-(li - 1)..li).map(&t).collect();
        let size = next_smooth(2 * l - 1);
        let mut col = vec![Complex::new(0.0, 0.0); size];
        for i in 0..l {
            col[i] = Complex::new(values[i + l - 1], 0.0);
        }
        for i in 1..l {
            col[size - i] = Complex::new(values[l - 1 - i], 0.0);
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        forward.process(&mut col);
        let scale = 1.0 / size as f64;
        for z in &mut col {
            *z *= scale;
        }
        Self {
            l,
            r,
            values,
            size,
            spectrum: Arc::new(col),
            forward,
            inverse,
        }
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    pub fn offset(&self) -> i64 {
        self.r
    }

    pub fn circulant_size(&self) -> usize {
        self.size
    }

    /// `F_{jk}`.
    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.values[j + self.l - 1 - k]
    }

    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.l, self.l, |j, k| self.entry(j, k))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.l {
            return Err(Error::DimensionMismatch {
                expected: self.l,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `F x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let zero = vec![0.0; self.l];
        Ok(self.apply_pair(x, &zero, false).0)
    }

    /// `F^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let zero = vec![0.0; self.l];
        Ok(self.apply_pair(x, &zero, true).0)
    }

    /// `(F x, F y)` or `(F^T x, F^T y)` from one complex transform pair:
    /// the circulant is real, so `C(x + iy) = Cx + i Cy`.
    pub fn matvec_pair(&self, x: &[f64], y: &[f64], transpose: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.apply_pair(x, y, transpose))
    }

    fn apply_pair(&self, x: &[f64], y: &[f64], transpose: bool) -> (Vec<f64>, Vec<f64>) {
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for i in 0..self.l {
            buf[i] = Complex::new(x[i], y[i]);
        }
        let mut scratch = vec![Complex::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(&mut buf, &mut scratch);
        if transpose {
            for (z, s) in buf.iter_mut().zip(self.spectrum.iter()) {
                *z *= s.conj();
            }
        } else {
            for (z, s) in buf.iter_mut().zip(self.spectrum.iter()) {
                *z *= *s;
            }
        }
        if scratch.len() < self.inverse.get_inplace_scratch_len() {
            scratch.resize(self.inverse.get_inplace_scratch_len(), Complex::new(0.0, 0.0));
        }
        self.inverse.process_with_scratch(&mut buf, &mut scratch);
        let fx = buf[..self.l].iter().map(|z| z.re).collect();
        let fy = buf[..self.l].iter().map(|z| z.im).collect();
        (fx, fy)
    }
}
