use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BipartiteSplit, CovarianceMatrix};
use crate::error::{Error, Result};
use crate::linalg::C64;

/// On-disk covariance format: `entries` is the row-major `2n x 2n` matrix as
/// `[re, im]` pairs; `split_a` lists Alice's 0-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceFile {
    pub modes: usize,
    pub split_a: Vec<usize>,
    pub entries: Vec<[f64; 2]>,
}

impl CovarianceFile {
    pub fn from_state(s: &CovarianceMatrix, split: &BipartiteSplit) -> Self {
        let e = s.entries();
        let dim = e.nrows();
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push([e[(i, j)].re, e[(i, j)].im]);
            }
        }
        Self {
            modes: s.modes(),
            split_a: split.a().to_vec(),
            entries,
        }
    }

    /// Raw matrix, unvalidated.
    pub fn matrix(&self) -> Result<DMatrix<C64>> {
        let dim = 2 * self.modes;
        if self.entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: self.entries.len(),
            });
        }
        Ok(DMatrix::from_row_iterator(
            dim,
            dim,
            self.entries.iter().map(|&[re, im]| C64::new(re, im)),
        ))
    }

    pub fn split(&self) -> Result<BipartiteSplit> {
        BipartiteSplit::new(2 * self.modes, self.split_a.clone())
    }

    pub fn to_state(&self) -> Result<(CovarianceMatrix, BipartiteSplit)> {
        let s = CovarianceMatrix::new(self.matrix()?)?;
        Ok((s, self.split()?))
    }
}

pub fn read_covariance(path: impl AsRef<Path>) -> Result<CovarianceFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_covariance(
    path: impl AsRef<Path>,
    s: &CovarianceMatrix,
    split: &BipartiteSplit,
) -> Result<()> {
    let file = CovarianceFile::from_state(s, split);
    std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let mut g = DMatrix::<f64>::zeros(4, 4);
        g[(0, 2)] = 0.3;
        g[(2, 0)] = -0.3;
        g[(1, 3)] = -1.0 / 3.0;
        g[(3, 1)] = 1.0 / 3.0;
        let s = CovarianceMatrix::from_gamma(g).unwrap();
        let split = BipartiteSplit::new(4, vec![0, 1]).unwrap();
        let file = CovarianceFile::from_state(&s, &split);
        let text = serde_json::to_string(&file).unwrap();
        let back: CovarianceFile = serde_json::from_str(&text).unwrap();
        let (s2, split2) = back.to_state().unwrap();
        assert_eq!(s, s2);
        assert_eq!(split, split2);
    }

    #[test]
    fn wrong_entry_count_is_rejected() {
        let file = CovarianceFile {
            modes: 1,
            split_a: vec![0],
            entries: vec![[0.5, 0.0]; 3],
        };
        assert!(file.matrix().is_err());
    }
}
