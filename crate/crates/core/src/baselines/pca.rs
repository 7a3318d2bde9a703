//! Linear shape models: PCA with a Gaussian over mode coefficients, and
//! the decoupled centerline/radii variant decoded through the tube map.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{fit_gaussian, GaussianModel};
use crate::error::{Error, Result};
use crate::geometry::{RadialProfile, VesselLatent};
use crate::diffusion::observe::unflatten;

/// Default number of retained modes.
pub const DEFAULT_MODES: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One unit vector per mode, ranked by explained variance.
    pub modes: Vec<Vec<f64>>,
    /// Variance along each mode, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Distribution of the training coefficients.
    pub gaussian: GaussianModel,
}

/// Fits a PCA model on equal-length vectors. The mode count defaults to
/// `min(K, 21)` and never exceeds the rank bound `min(K−1, D)`.
pub fn pca_fit(data: &[Vec<f64>], modes: Option<usize>) -> Result<PcaModel> {
    let k = data.len();
    if k < 2 {
        return Err(Error::validation(format!("PCA needs at least 2 samples, got {k}")));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|v| v.len() != d) {
        return Err(Error::validation("PCA samples must share a non-zero length"));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite sample value"));
    }
    let requested = modes.unwrap_or(DEFAULT_MODES.min(k));
    if requested == 0 {
        return Err(Error::validation("mode count must be at least 1"));
    }
    let q = requested.min(k - 1).min(d);
    let mut mean = vec![0.0; d];
    for v in data {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let x = DMatrix::from_fn(k, d, |i, j| data[i][j] - mean[j]);
    let svd = x.clone().svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return right vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let order = &order[..q];
    let basis: Vec<Vec<f64>> = order.iter().map(|&r| vt.row(r).iter().copied().collect()).collect();
    let eigenvalues = order
        .iter()
        .map(|&r| svd.singular_values[r].powi(2) / (k - 1) as f64)
        .collect();
    let u = basis_matrix(&basis, d);
    let coeffs: Vec<Vec<f64>> = (0..k)
        .map(|i| (u.transpose() * x.row(i).transpose()).iter().copied().collect())
        .collect();
    Ok(PcaModel {
        mean,
        modes: basis,
        eigenvalues,
        gaussian: fit_gaussian(&coeffs)?,
    })
}

fn basis_matrix(modes: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, modes.len(), |i, j| modes[j][i])
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// `D×q` basis matrix `U`.
    pub fn basis(&self) -> DMatrix<f64> {
        basis_matrix(&self.modes, self.dim())
    }

    /// `a = Uᵀ(v − v̄)`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(self
            .modes
            .iter()
            .map(|u| u.iter().zip(v).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect())
    }

    /// `v̄ + U a`.
    pub fn reconstruct(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.num_modes() {
            return Err(Error::validation(format!(
                "expected {} coefficients, got {}",
                self.num_modes(),
                a.len()
            )));
        }
        let mut v = self.mean.clone();
        for (u, &c) in self.modes.iter().zip(a) {
            for (x, b) in v.iter_mut().zip(u) {
                *x += c * b;
            }
        }
        Ok(v)
    }

    /// Norm of the part of `v − v̄` outside `span(U)`.
    pub fn subspace_distance(&self, v: &[f64]) -> Result<f64> {
        let a = self.project(v)?;
        let back = self.reconstruct(&a)?;
        Ok(v.iter().zip(&back).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::validation(format!(
                "vector length {} differs from model dimension {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let m: PcaModel = serde_json::from_reader(std::io::BufReader::new(f))?;
        if m.modes.iter().any(|u| u.len() != m.dim()) || m.gaussian.dim() != m.num_modes() {
            return Err(Error::validation("inconsistent PCA model file"));
        }
        Ok(m)
    }
}

/// Free-function form of [`PcaModel::subspace_distance`].
pub fn subspace_distance(v: &[f64], pca: &PcaModel) -> Result<f64> {
    pca.subspace_distance(v)
}

/// `v̄ + U a` with `a ~ N(μ*, Σ*)`.
pub fn sample_pca_gaussian<R: Rng + ?Sized>(model: &PcaModel, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    model
        .gaussian
        .sample_many(count, rng)
        .iter()
        .map(|a| model.reconstruct(a).expect("coefficient width fixed by the model"))
        .collect()
}

/// Independent draws from a centerline model (over flattened `n×3`
/// control points) and a radii model (over flattened `n×m` radii),
/// combined into latents. Radii are floored at `radius_floor`.
pub fn sample_pca_decoupled<R: Rng + ?Sized>(
    cl_model: &PcaModel,
    rad_model: &PcaModel,
    m: usize,
    count: usize,
    radius_floor: f64,
    rng: &mut R,
) -> Result<Vec<VesselLatent<f64>>> {
    if cl_model.dim() % 3 != 0 || m == 0 || rad_model.dim() != (cl_model.dim() / 3) * m {
        return Err(Error::validation("centerline and radii model widths do not fit n×3 / n×m"));
    }
    let n = cl_model.dim() / 3;
    let cls = sample_pca_gaussian(cl_model, count, rng);
    let rads = sample_pca_gaussian(rad_model, count, rng);
    cls.into_iter()
        .zip(rads)
        .map(|(c, r)| {
            Ok(VesselLatent {
                control_points: unflatten(&c),
                radii: RadialProfile::new(n, m, r.into_iter().map(|v| v.max(radius_floor)).collect())?,
            })
        })
        .collect()
}
