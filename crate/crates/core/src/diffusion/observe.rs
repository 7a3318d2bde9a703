//! Observation operators linking latents to point prompts.

use ndarray::ArrayView1;

use super::normalize::Normalizer;
use super::sampler::{Observation, ObservationTerm};
use crate::error::{Error, Result};
use crate::fitting::directed_chamfer_grad;
use crate::geometry::curve::{uniform_params, CurveSampler};
use crate::geometry::knots::KnotVector;
use crate::geometry::vessel::SurfaceMap;
use crate::geometry::{Vec3, VesselSkeleton, DEFAULT_DEGREE};
use crate::scalar::Scalar;

pub const DEFAULT_CURVE_SAMPLES: usize = 64;

/// Flattened `n×3` control points to points.
pub fn unflatten<T: Scalar>(flat: &[T]) -> Vec<Vec3<T>> {
    flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub fn flatten<T: Scalar>(pts: &[Vec3<T>]) -> Vec<T> {
    pts.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Points on the centerline decoded from a normalized control-point row,
/// compared with point prompts.
pub struct CenterlineObservation<'a, T> {
    pub prompts: Vec<Vec3<T>>,
    pub norm: &'a Normalizer<T>,
    sampler: CurveSampler<T>,
}

impl<'a, T: Scalar> CenterlineObservation<'a, T> {
    pub fn new(n: usize, norm: &'a Normalizer<T>, prompts: Vec<Vec3<T>>, samples: usize) -> Result<Self> {
        if norm.dim() != 3 * n {
            return Err(Error::validation("normalizer width does not match 3n"));
        }
        if samples < 2 {
            return Err(Error::validation("need at least two curve samples"));
        }
        let knots = KnotVector::clamped_averaged(&uniform_params::<T>(n), DEFAULT_DEGREE)?;
        let params = (0..samples).map(|k| T::of(k as f64 / (samples - 1) as f64)).collect();
        Ok(CenterlineObservation {
            prompts,
            norm,
            sampler: CurveSampler::new(&knots, params)?,
        })
    }
}

impl<T: Scalar> Observation<T> for CenterlineObservation<'_, T> {
    fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    fn evaluate(&self, _row: usize, x0: ArrayView1<T>) -> Result<ObservationTerm<T>> {
        let ctrl = unflatten(&self.norm.denormalize_row(x0));
        let pts = self.sampler.points(&ctrl);
        let (value, gp) = directed_chamfer_grad(&self.prompts, &pts)?;
        let mut gc = vec![Vec3::zero(); ctrl.len()];
        self.sampler.pullback_points(&gp, &mut gc);
        let grad = flatten(&gc)
            .into_iter()
            .enumerate()
            .map(|(k, g)| g * self.norm.range(k))
            .collect();
        Ok(ObservationTerm {
            value,
            grad,
            count: self.prompts.len(),
        })
    }
}

/// Surface lattice decoded from a normalized radii row on a fixed
/// per-row skeleton, compared with contour / patch prompts.
pub struct SurfaceObservation<'a, T> {
    pub prompts: Vec<Vec3<T>>,
    pub norm: &'a Normalizer<T>,
    pub map: &'a SurfaceMap<T>,
    /// Skeleton used by each batch row.
    pub skeletons: Vec<&'a VesselSkeleton<T>>,
}

impl<T: Scalar> Observation<T> for SurfaceObservation<'_, T> {
    fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    fn evaluate(&self, row: usize, x0: ArrayView1<T>) -> Result<ObservationTerm<T>> {
        let skel = self
            .skeletons
            .get(row)
            .ok_or_else(|| Error::validation(format!("no skeleton for row {row}")))?;
        let radii = self.norm.denormalize_row(x0);
        let pts = self.map.points_unchecked(skel, &radii);
        let (value, gp) = directed_chamfer_grad(&self.prompts, &pts)?;
        let grad = self
            .map
            .radii_pullback(skel, &gp)
            .into_iter()
            .enumerate()
            .map(|(k, g)| g * self.norm.range(k))
            .collect();
        Ok(ObservationTerm {
            value,
            grad,
            count: self.prompts.len(),
        })
    }
}
