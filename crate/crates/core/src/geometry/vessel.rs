//! The composed decoder: latents `(C, R)` to surface points.

use serde::{Deserialize, Serialize};

use super::curve::{uniform_params, ControlPolygon, CurveSampler};
use super::frames::VesselSkeleton;
use super::knots::KnotVector;
use super::mesh::QuadMesh;
use super::surface::{skeleton_points, RadialProfile, SurfaceControlGrid, SurfaceSampler};
use super::vec3::Vec3;
use super::DEFAULT_DEGREE;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Latent encoding of one vessel: centerline control points and radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselLatent<T> {
    pub control_points: Vec<Vec3<T>>,
    pub radii: RadialProfile<T>,
}

impl<T: Scalar> VesselLatent<T> {
    pub fn n(&self) -> usize {
        self.control_points.len()
    }

    pub fn m(&self) -> usize {
        self.radii.m
    }

    pub fn polygon(&self) -> Result<ControlPolygon<T>> {
        ControlPolygon::from_points(self.control_points.clone(), DEFAULT_DEGREE)
    }

    /// Decodes to a structured mesh at the given resolution.
    pub fn mesh(&self, res_u: usize, res_v: usize) -> Result<QuadMesh<T>> {
        let map = SurfaceMap::new(self.n(), self.m(), res_u, res_v)?;
        let ev = map.forward(&self.control_points, &self.radii)?;
        Ok(QuadMesh::structured(ev.points, res_u, res_v))
    }

    pub fn flatten_centerline(&self) -> Vec<T> {
        self.control_points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }
}

/// Result of one forward evaluation, kept for the pullback.
#[derive(Debug, Clone)]
pub struct SurfaceEval<T> {
    pub skeleton: VesselSkeleton<T>,
    pub grid: SurfaceControlGrid<T>,
    pub points: Vec<Vec3<T>>,
}

/// `B(C, R)`: centerline → skeleton → control net → surface lattice, with
/// all basis tables precomputed for fixed `(n, m)` and lattice resolution.
#[derive(Debug, Clone)]
pub struct SurfaceMap<T> {
    pub n: usize,
    pub m: usize,
    pub res_u: usize,
    pub res_v: usize,
    pub u_knots: KnotVector<T>,
    pub v_knots: KnotVector<T>,
    pub sections: CurveSampler<T>,
    pub lattice: SurfaceSampler<T>,
}

impl<T: Scalar> SurfaceMap<T> {
    pub fn new(n: usize, m: usize, res_u: usize, res_v: usize) -> Result<Self> {
        if n < DEFAULT_DEGREE + 1 {
            return Err(Error::validation(format!("need at least 4 sections, got {n}")));
        }
        let params = uniform_params::<T>(n);
        let u_knots = KnotVector::clamped_averaged(&params, DEFAULT_DEGREE)?;
        let v_knots = KnotVector::periodic_radial(m, DEFAULT_DEGREE)?;
        let sections = CurveSampler::new(&u_knots, params)?;
        let lattice = SurfaceSampler::lattice_for(&u_knots, &v_knots, res_u, res_v)?;
        Ok(SurfaceMap {
            n,
            m,
            res_u,
            res_v,
            u_knots,
            v_knots,
            sections,
            lattice,
        })
    }

    pub fn skeleton(&self, ctrl: &[Vec3<T>]) -> Result<VesselSkeleton<T>> {
        if ctrl.len() != self.n {
            return Err(Error::validation(format!(
                "expected {} control points, got {}",
                self.n,
                ctrl.len()
            )));
        }
        VesselSkeleton::from_parts(&self.sections, ctrl, self.m)
    }

    pub fn forward(&self, ctrl: &[Vec3<T>], radii: &RadialProfile<T>) -> Result<SurfaceEval<T>> {
        let skeleton = self.skeleton(ctrl)?;
        self.forward_with(skeleton, radii)
    }

    /// Evaluation reusing a skeleton (the radii-only path).
    pub fn forward_with(
        &self,
        skeleton: VesselSkeleton<T>,
        radii: &RadialProfile<T>,
    ) -> Result<SurfaceEval<T>> {
        let grid = skeleton_points(&skeleton, radii, &self.u_knots, DEFAULT_DEGREE)?;
        let points = self.lattice.eval(&grid);
        Ok(SurfaceEval {
            skeleton,
            grid,
            points,
        })
    }

    /// Surface points for a skeleton with radii that may be nonpositive
    /// (used inside samplers where intermediate radii are not validated).
    pub fn points_unchecked(&self, skeleton: &VesselSkeleton<T>, radii: &[T]) -> Vec<Vec3<T>> {
        let mut grid = SurfaceControlGrid {
            n: self.n,
            m: self.m,
            points: Vec::with_capacity(self.n * self.m),
            padded_points: Vec::new(),
            weights: vec![T::one(); self.n * self.m],
            u_knots: self.u_knots.clone(),
            v_knots: self.v_knots.clone(),
        };
        for i in 0..self.n {
            for j in 0..self.m {
                grid.points
                    .push(skeleton.centers[i] + skeleton.directions[i][j] * radii[i * self.m + j]);
            }
        }
        grid.refresh_padding();
        self.lattice.eval(&grid)
    }

    /// `∂L/∂r` given `∂L/∂P` for a fixed skeleton; unit weights assumed.
    pub fn radii_pullback(&self, skeleton: &VesselSkeleton<T>, grads: &[Vec3<T>]) -> Vec<T> {
        let grid = SurfaceControlGrid {
            n: self.n,
            m: self.m,
            points: vec![Vec3::zero(); self.n * self.m],
            padded_points: vec![Vec3::zero(); self.n * (self.m + 1 + DEFAULT_DEGREE)],
            weights: vec![T::one(); self.n * self.m],
            u_knots: self.u_knots.clone(),
            v_knots: self.v_knots.clone(),
        };
        let gs = self.lattice.pullback(&grid, grads);
        (0..self.n * self.m)
            .map(|k| gs[k].dot(skeleton.directions[k / self.m][k % self.m]))
            .collect()
    }
}
