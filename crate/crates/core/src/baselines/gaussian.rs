//! Multivariate Gaussian with unbiased covariance and a jittered
//! Cholesky factor for sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative diagonal jitter, scaled by `trace/D`.
pub const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mean: Vec<f64>,
    /// Row-major `D×D`.
    pub covariance: Vec<Vec<f64>>,
    /// Lower-triangular `L` with `L Lᵀ = Σ + jitter·I`.
    pub factor: Vec<Vec<f64>>,
    pub jitter: f64,
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// `μ = mean`, `Σ = 1/(K−1) Σ (a−μ)(a−μ)ᵀ`.
pub fn fit_gaussian(samples: &[Vec<f64>]) -> Result<GaussianModel> {
    let k = samples.len();
    if k < 2 {
        return Err(Error::validation(format!("need at least 2 samples, got {k}")));
    }
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|s| s.len() != d) {
        return Err(Error::validation("samples must share a non-zero dimension"));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite sample value"));
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let centered = DMatrix::from_fn(k, d, |i, j| samples[i][j] - mean[j]);
    let mut cov = centered.transpose() * &centered / (k - 1) as f64;
    // exact symmetry regardless of summation order
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let (factor, jitter) = jittered_cholesky(&cov)?;
    Ok(GaussianModel {
        mean,
        covariance: to_rows(&cov),
        factor: to_rows(&factor),
        jitter,
    })
}

/// Cholesky of `Σ`, retrying with growing diagonal jitter starting at
/// `1e−10·trace/D` when `Σ` is not numerically positive definite. A zero
/// matrix gets a zero factor.
pub fn jittered_cholesky(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let d = cov.nrows();
    if let Some(c) = cov.clone().cholesky() {
        return Ok((c.l(), 0.0));
    }
    let base = JITTER_SCALE * cov.trace() / d as f64;
    if base == 0.0 {
        if cov.iter().all(|&v| v == 0.0) {
            return Ok((DMatrix::zeros(d, d), 0.0));
        }
        return Err(Error::Numerical("covariance has zero trace but non-zero entries".into()));
    }
    let mut jitter = base;
    for _ in 0..12 {
        let shifted = cov + DMatrix::identity(d, d) * jitter;
        if let Some(c) = shifted.cholesky() {
            return Ok((c.l(), jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical("covariance could not be factorized".into()))
}

impl GaussianModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.covariance)
    }

    pub fn factor_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.factor)
    }

    /// `μ + L z`, `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let x = self.factor_matrix() * z;
        x.iter().zip(&self.mean).map(|(a, b)| a + b).collect()
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let l = self.factor_matrix();
        let d = self.dim();
        (0..count)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
                let x = &l * z;
                x.iter().zip(&self.mean).map(|(a, b)| a + b).collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_samples() {
        let g = fit_gaussian(&[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(g.mean, vec![0.0, 0.0]);
        assert_eq!(g.covariance, vec![vec![2.0, 0.0], vec![0.0, 0.0]]);
        let l = g.factor_matrix();
        let back = &l * l.transpose();
        let target = g.covariance_matrix() + DMatrix::identity(2, 2) * g.jitter;
        assert!((back - target).abs().max() < 1e-8);
        assert!(g.jitter > 0.0);
    }

    #[test]
    fn too_few() {
        assert!(fit_gaussian(&[vec![1.0]]).unwrap_err().is_validation());
    }

    #[test]
    fn constant_data_has_zero_factor() {
        let g = fit_gaussian(&[vec![0.3, 0.5], vec![0.3, 0.5], vec![0.3, 0.5]]).unwrap();
        let mut rng = rand::rng();
        assert_eq!(g.sample(&mut rng), vec![0.3, 0.5]);
    }
}
