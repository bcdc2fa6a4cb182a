use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MfccMatrix;
use crate::{Error, Result};

const STD_FLOOR: f64 = 1e-8;

/// Per-coefficient standardization statistics, fit on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Mean and (population) standard deviation of every coefficient over
    /// all frames of all matrices. The std is floored at `1e-8`.
    pub fn fit<'a, I>(train: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a MfccMatrix>,
    {
        let mut n_coeffs = None;
        let mut count = 0usize;
        let mut sum = Vec::new();
        let mut sum_sq = Vec::new();
        // Two passes would need the iterator twice; accumulate shifted sums instead.
        let mut shift: Vec<f64> = Vec::new();
        for m in train {
            let c = *n_coeffs.get_or_insert(m.n_coeffs());
            if c != m.n_coeffs() {
                return Err(Error::InvalidArgument("matrices disagree on coefficient count".into()));
            }
            if shift.is_empty() {
                shift = m.row(0).to_vec();
                sum = vec![0.0; c];
                sum_sq = vec![0.0; c];
            }
            for row in m.rows() {
                for j in 0..c {
                    let d = row[j] - shift[j];
                    sum[j] += d;
                    sum_sq[j] += d * d;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Empty("cannot fit normalizer on an empty training set".into()));
        }
        let n = count as f64;
        let mean = sum.iter().zip(&shift).map(|(s, k)| k + s / n).collect();
        let std = sum
            .iter()
            .zip(&sum_sq)
            .map(|(s, sq)| {
                let m = s / n;
                libm::sqrt((sq / n - m * m).max(0.0)).max(STD_FLOOR)
            })
            .collect();
        Ok(Self { mean, std })
    }

    fn check(&self, m: &MfccMatrix) -> Result<()> {
        if m.n_coeffs() != self.mean.len() {
            return Err(Error::Shape {
                layer: "normalizer".into(),
                expected: alloc::format!("{} coefficients", self.mean.len()),
                actual: alloc::format!("{}", m.n_coeffs()),
            });
        }
        Ok(())
    }

    pub fn apply(&self, m: &MfccMatrix) -> Result<MfccMatrix> {
        self.check(m)?;
        let mut out = m.clone();
        let c = self.mean.len();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            let j = i % c;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        Ok(out)
    }

    pub fn invert(&self, m: &MfccMatrix) -> Result<MfccMatrix> {
        self.check(m)?;
        let mut out = m.clone();
        let c = self.mean.len();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            let j = i % c;
            *v = *v * self.std[j] + self.mean[j];
        }
        Ok(out)
    }
}
