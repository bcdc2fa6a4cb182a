use alloc::format;
use alloc::vec::Vec;

use serde::de::Error as _;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Time-major `frames x n_coeffs` feature matrix.
///
/// Serializes as a nested array of rows (one row per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    frames: usize,
    n_coeffs: usize,
    values: Vec<f64>,
}

impl MfccMatrix {
    pub fn new(frames: usize, n_coeffs: usize, values: Vec<f64>) -> Result<Self> {
        if frames * n_coeffs != values.len() {
            return Err(Error::Shape {
                layer: "mfcc matrix".into(),
                expected: format!("{frames}x{n_coeffs}"),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(Self { frames, n_coeffs, values })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_coeffs(&self) -> usize {
        self.n_coeffs
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.n_coeffs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.n_coeffs..(frame + 1) * self.n_coeffs]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_coeffs.max(1))
    }
}

impl Serialize for MfccMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.frames))?;
        for row in self.rows() {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for MfccMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        let n_coeffs = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_coeffs) {
            return Err(D::Error::custom("ragged mfcc matrix"));
        }
        let frames = rows.len();
        let values = rows.into_iter().flatten().collect();
        Ok(Self { frames, n_coeffs, values })
    }
}
