//! `start:stop:step` ranges (stop exclusive), comma lists, single values.

use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T>(pub Vec<T>);

fn parse_one<T: FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot parse '{}'", s.trim()))
}

pub fn parse_usize_grid(s: &str) -> Result<Grid<usize>, String> {
    if let Some((start, stop, step)) = split_range(s) {
        let (start, stop, step): (usize, usize, usize) = (parse_one(start)?, parse_one(stop)?, parse_one(step)?);
        if step == 0 {
            return Err("range step must be positive".into());
        }
        let v: Vec<usize> = (start..stop).step_by(step).collect();
        return nonempty(v, s);
    }
    nonempty(s.split(',').map(parse_one).collect::<Result<_, _>>()?, s)
}

pub fn parse_f64_grid(s: &str) -> Result<Grid<f64>, String> {
    if let Some((start, stop, step)) = split_range(s) {
        let (start, stop, step): (f64, f64, f64) = (parse_one(start)?, parse_one(stop)?, parse_one(step)?);
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
            return Err("range needs finite bounds and a positive step".into());
        }
        // Index-based so values do not accumulate rounding.
        let mut v = Vec::new();
        let mut i = 0u32;
        loop {
            let x = start + f64::from(i) * step;
            if x >= stop - 1e-12 * step {
                break;
            }
            v.push(x);
            i += 1;
        }
        return nonempty(v, s);
    }
    let v: Vec<f64> = s.split(',').map(parse_one).collect::<Result<_, _>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("non-finite value in '{s}'"));
    }
    nonempty(v, s)
}

fn split_range(s: &str) -> Option<(&str, &str, &str)> {
    let mut parts = s.split(':');
    let (a, b, c) = (parts.next()?, parts.next()?, parts.next()?);
    parts.next().is_none().then_some((a, b, c))
}

fn nonempty<T>(v: Vec<T>, s: &str) -> Result<Grid<T>, String> {
    if v.is_empty() {
        return Err(format!("'{s}' is empty"));
    }
    Ok(Grid(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_ranges_exclude_stop() {
        assert_eq!(parse_usize_grid("100:500:100").unwrap().0, vec![100, 200, 300, 400]);
        assert_eq!(parse_usize_grid("1,10,100").unwrap().0, vec![1, 10, 100]);
        assert_eq!(parse_usize_grid("7").unwrap().0, vec![7]);
        assert!(parse_usize_grid("5:5:1").is_err());
        assert!(parse_usize_grid("1:5:0").is_err());
        assert!(parse_usize_grid("1:x:1").is_err());
        assert!(parse_usize_grid("1:2:3:4").is_err());
    }

    #[test]
    fn float_ranges() {
        let g = parse_f64_grid("-1:1:0.5").unwrap().0;
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5]);
        assert_eq!(parse_f64_grid("0:0.3:0.1").unwrap().0.len(), 3);
        assert_eq!(parse_f64_grid("0.2,-0.4").unwrap().0, vec![0.2, -0.4]);
        assert!(parse_f64_grid("0:1:-0.1").is_err());
        assert!(parse_f64_grid("nan").is_err());
    }
}
