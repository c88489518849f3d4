use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranges narrower than this are treated as degenerate.
const MIN_RANGE: f64 = 1e-12;

/// Per-dimension affine map of the fitting set onto [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxNormalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxNormalizer {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter.next().ok_or(Error::EmptyLabelSet)?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in iter {
            if row.len() != min.len() {
                return Err(Error::DimensionMismatch {
                    expected: min.len(),
                    got: row.len(),
                });
            }
            for (d, &x) in row.iter().enumerate() {
                min[d] = min[d].min(x);
                max[d] = max[d].max(x);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn is_degenerate(&self) -> bool {
        (0..self.dim()).any(|d| self.dim_degenerate(d))
    }

    fn dim_degenerate(&self, d: usize) -> bool {
        !(self.max[d] - self.min[d] > MIN_RANGE)
    }

    /// Degenerate dimensions map to 0.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(d, &v)| {
                if self.dim_degenerate(d) {
                    0.0
                } else {
                    (v - self.min[d]) / (self.max[d] - self.min[d])
                }
            })
            .collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(d, &v)| self.min[d] + v * (self.max[d] - self.min[d]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn maps_fitting_set_to_unit_box() {
        let rows = [vec![1.0, -2.0], vec![3.0, 2.0], vec![2.0, 0.0]];
        let n = MinMaxNormalizer::fit(rows.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(n.normalize(&[1.0, -2.0]), vec![0.0, 0.0]);
        assert_eq!(n.normalize(&[3.0, 2.0]), vec![1.0, 1.0]);
        assert_eq!(n.normalize(&[2.0, 0.0]), vec![0.5, 0.5]);
        assert!(!n.is_degenerate());
    }

    #[test]
    fn constant_dimension_is_degenerate() {
        let rows = [vec![1.0, 5.0], vec![2.0, 5.0]];
        let n = MinMaxNormalizer::fit(rows.iter().map(Vec::as_slice)).unwrap();
        assert!(n.is_degenerate());
        assert_eq!(n.normalize(&[1.5, 5.0]), vec![0.5, 0.0]);
    }

    #[test]
    fn empty_and_ragged_inputs_fail() {
        assert!(matches!(
            MinMaxNormalizer::fit(std::iter::empty()),
            Err(Error::EmptyLabelSet)
        ));
        let rows = [vec![1.0, 5.0], vec![2.0]];
        assert!(MinMaxNormalizer::fit(rows.iter().map(Vec::as_slice)).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..20),
            probe in proptest::collection::vec(-1e3f64..1e3, 3),
        ) {
            let n = MinMaxNormalizer::fit(rows.iter().map(Vec::as_slice)).unwrap();
            prop_assume!(!n.is_degenerate());
            let back = n.denormalize(&n.normalize(&probe));
            for (a, b) in back.iter().zip(&probe) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
