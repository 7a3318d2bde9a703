//! Per-dimension min/max scaling to `[0, 1]`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn fit(data: ArrayView2<T>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::validation("cannot fit normalizer on empty data"));
        }
        let mut min = vec![T::infinity(); data.ncols()];
        let mut max = vec![T::neg_infinity(); data.ncols()];
        for row in data.rows() {
            for (k, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::validation("non-finite value in training data"));
                }
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Ok(Normalizer { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Width of each dimension; constant dimensions use 1 so they map to 0.
    pub fn range(&self, k: usize) -> T {
        let r = self.max[k] - self.min[k];
        if r > T::zero() {
            r
        } else {
            T::one()
        }
    }

    pub fn normalize_row(&self, x: ArrayView1<T>) -> Vec<T> {
        x.iter().enumerate().map(|(k, &v)| (v - self.min[k]) / self.range(k)).collect()
    }

    pub fn denormalize_row(&self, x: ArrayView1<T>) -> Vec<T> {
        x.iter().enumerate().map(|(k, &v)| v * self.range(k) + self.min[k]).collect()
    }

    pub fn normalize(&self, data: ArrayView2<T>) -> Array2<T> {
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.min[k]) / self.range(k);
            }
        }
        out
    }

    pub fn denormalize(&self, data: ArrayView2<T>) -> Array2<T> {
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = *v * self.range(k) + self.min[k];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_and_bounds() {
        let d: ndarray::Array2<f64> = array![[1.0, -3.0, 5.0], [4.0, 2.0, 5.0], [2.5, 0.0, 5.0]];
        let n = Normalizer::fit(d.view()).unwrap();
        let z = n.normalize(d.view());
        assert!(z.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(z[[0, 0]], 0.0);
        assert_eq!(z[[1, 0]], 1.0);
        let back = n.denormalize(z.view());
        for (a, b) in back.iter().zip(d.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
