use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares line `y = slope x + intercept` and its RMS residual.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: ys.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok((slope, intercept, (rss / nf).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    /// RMS residual of `log(1 - value)`.
    pub residual: f64,
    #[serde(rename = "L_min")]
    pub l_min: f64,
    pub points_used: usize,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

/// Fits `value = 1 - b / L^a` on samples with `L >= l_min` via a line in
/// `(log L, log(1 - value))`.
pub fn fit_power_law(samples: &[(f64, f64)], l_min: f64) -> Result<PowerLawFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut warnings = Vec::new();
    for &(l, v) in samples.iter().filter(|(l, _)| *l >= l_min) {
        if !(v < 1.0) || !v.is_finite() || l <= 0.0 {
            warnings.push(format!("skipped L = {l}: value {v} leaves no room below 1"));
            continue;
        }
        xs.push(l.ln());
        ys.push((1.0 - v).ln());
    }
    if xs.len() < 3 {
        return Err(Error::TooFewPoints(xs.len()));
    }
    let (slope, intercept, residual) = fit_line(&xs, &ys)?;
    Ok(PowerLawFit {
        a: -slope,
        b: intercept.exp(),
        residual,
        l_min,
        points_used: xs.len(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinLength {
    #[serde(rename = "L")]
    pub l: usize,
    pub value: f64,
    pub evaluations: usize,
    /// Some sampled value was smaller than a sample at shorter length.
    pub non_monotonic: bool,
    /// The samples contradicted a single crossing, so the answer comes from a
    /// linear scan up from `l_lo`.
    pub scanned: bool,
}

/// Points checked on each side of the bisection result.
pub const CROSSING_WINDOW: usize = 8;

/// Smallest `L` in `[l_lo, l_hi]` with `f(L) >= x`, by exponential bracketing
/// from `l_lo` and bisection, then a check of `CROSSING_WINDOW` lengths on
/// each side of the crossing. If any sample puts `f >= x` before the crossing
/// or `f < x` after it, falls back to scanning upward from `l_lo`.
pub fn min_length<F>(x: f64, l_lo: usize, l_hi: usize, mut f: F) -> Result<MinLength>
where
    F: FnMut(usize) -> Result<f64>,
{
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidParameter(format!("target {x} outside (0, 1)")));
    }
    if l_lo > l_hi {
        return Err(Error::InvalidParameter(format!("empty range [{l_lo}, {l_hi}]")));
    }
    let mut seen: BTreeMap<usize, f64> = BTreeMap::new();
    let mut eval = |l: usize, seen: &mut BTreeMap<usize, f64>| -> Result<f64> {
        if let Some(&v) = seen.get(&l) {
            return Ok(v);
        }
        let v = f(l)?;
        seen.insert(l, v);
        Ok(v)
    };

    let top = eval(l_hi, &mut seen)?;
    if top < x {
        return Err(Error::TargetUnreachable {
            target: x,
            l_hi,
            reached: top,
        });
    }
    let found = if eval(l_lo, &mut seen)? >= x {
        l_lo
    } else {
        // f(lo) < x <= f(hi)
        let mut lo = l_lo;
        let mut step = 1;
        let mut hi = loop {
            let probe = (lo + step).min(l_hi);
            if eval(probe, &mut seen)? >= x {
                break probe;
            }
            lo = probe;
            step *= 2;
        };
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if eval(mid, &mut seen)? >= x {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let window = found.saturating_sub(CROSSING_WINDOW).max(l_lo)..=(found + CROSSING_WINDOW).min(l_hi);
    for l in window {
        eval(l, &mut seen)?;
    }

    let consistent = seen.iter().all(|(&l, &v)| (v >= x) == (l >= found));
    let non_monotonic = seen.values().zip(seen.values().skip(1)).any(|(a, b)| b < a);
    if consistent {
        return Ok(MinLength {
            l: found,
            value: seen[&found],
            evaluations: seen.len(),
            non_monotonic,
            scanned: false,
        });
    }
    for l in l_lo..=l_hi {
        let v = eval(l, &mut seen)?;
        if v >= x {
            return Ok(MinLength {
                l,
                value: v,
                evaluations: seen.len(),
                non_monotonic: true,
                scanned: true,
            });
        }
    }
    unreachable!("f(l_hi) >= x was checked")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_model_recovery() {
        let samples: Vec<(f64, f64)> = (1..=20)
            .map(|k| {
                let l = 100.0 * k as f64;
                (l, 1.0 - 3.0 / l.powf(1.5))
            })
            .collect();
        let fit = fit_power_law(&samples, 0.0).unwrap();
        assert!((fit.a - 1.5).abs() < 1e-9);
        assert!((fit.b - 3.0).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
        assert_eq!(fit.points_used, 20);
    }

    #[test]
    fn noisy_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 1e-4).unwrap();
        for _ in 0..20 {
            // Relative noise on 1 - value keeps the log-domain error ~1e-4.
            let samples: Vec<(f64, f64)> = (1..=30)
                .map(|k| {
                    let l = 1000.0 * k as f64;
                    let gap = 3.0 / l.powf(1.5);
                    (l, 1.0 - gap * (1.0 + noise.sample(&mut rng)))
                })
                .collect();
            let fit = fit_power_law(&samples, 0.0).unwrap();
            assert!((fit.a - 1.5).abs() < 1e-2, "a = {}", fit.a);
            assert!((fit.b - 3.0).abs() / 3.0 < 1e-2, "b = {}", fit.b);
        }
    }

    #[test]
    fn cutoff_and_skips() {
        let mut samples = vec![(10.0, 0.5), (20.0, 1.0), (30.0, 1.2)];
        samples.extend((1..=4).map(|k| (1000.0 * k as f64, 1.0 - 1.0 / (1000.0 * k as f64))));
        let fit = fit_power_law(&samples, 15.0).unwrap();
        assert_eq!(fit.points_used, 4);
        assert_eq!(fit.warnings.len(), 2);
        assert!((fit.a - 1.0).abs() < 1e-12);
        assert!(matches!(fit_power_law(&samples, 3000.0), Err(Error::TooFewPoints(2))));
    }

    #[test]
    fn min_length_on_monotone_function() {
        let f = |l: usize| Ok(1.0 - 1.0 / l as f64);
        for (x, expect) in [(0.5, 2usize), (0.9, 10), (0.99, 100), (0.999, 1000)] {
            let r = min_length(x, 2, 5000, f).unwrap();
            assert_eq!(r.l, expect);
            assert!(!r.non_monotonic);
            assert!(r.evaluations < 60);
        }
        assert_eq!(min_length(0.5, 1, 10, f).unwrap().l, 2);
        assert!(matches!(
            min_length(0.9999, 2, 100, f),
            Err(Error::TargetUnreachable { .. })
        ));
    }

    #[test]
    fn min_length_boundary() {
        let f = |l: usize| Ok(l as f64 / 1000.0);
        let r = min_length(0.1005, 100, 900, f).unwrap();
        assert_eq!(r.l, 101);
    }

    #[test]
    fn oscillation_below_target_is_flagged_only() {
        let vals = |l: usize| -> Result<f64> {
            Ok(match l {
                1 => 0.3,
                2 | 3 => 0.1,
                4 => 0.6,
                _ => 0.8,
            })
        };
        let r = min_length(0.5, 1, 40, vals).unwrap();
        assert_eq!(r.l, 4);
        assert!(r.non_monotonic);
        assert!(!r.scanned);
    }

    #[test]
    fn early_crossing_near_answer_triggers_scan() {
        // Bisection lands on 33; 27 crosses first and is caught by the window.
        let vals = |l: usize| -> Result<f64> {
            Ok(match l {
                27 => 0.7,
                0..=32 => 0.1,
                _ => 0.8,
            })
        };
        let r = min_length(0.5, 1, 64, vals).unwrap();
        assert_eq!(r.l, 27);
        assert!(r.scanned);
        assert!(r.non_monotonic);
    }
}
