//! JSON exchange formats for latents and surface grids.

use serde::{Deserialize, Serialize};

use super::frames::VesselSkeleton;
use super::surface::{RadialProfile, SurfaceControlGrid};
use super::vec3::Vec3;
use super::vessel::VesselLatent;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `{control_points: n×3, radii: n×m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFile {
    pub control_points: Vec<[f64; 3]>,
    pub radii: Vec<Vec<f64>>,
}

impl LatentFile {
    pub fn from_latent<T: Scalar>(lat: &VesselLatent<T>) -> Self {
        LatentFile {
            control_points: lat
                .control_points
                .iter()
                .map(|p| p.cast::<f64>().to_array())
                .collect(),
            radii: (0..lat.radii.n)
                .map(|i| lat.radii.row(i).iter().map(|r| r.to_f64_lossy()).collect())
                .collect(),
        }
    }

    pub fn to_latent<T: Scalar>(&self) -> Result<VesselLatent<T>> {
        let n = self.radii.len();
        if n != self.control_points.len() {
            return Err(Error::validation(format!(
                "{} control points but {n} radii rows",
                self.control_points.len()
            )));
        }
        let m = self.radii.first().map_or(0, |r| r.len());
        if self.radii.iter().any(|r| r.len() != m) {
            return Err(Error::validation("ragged radii rows"));
        }
        let radii = self.radii.iter().flatten().map(|&r| T::of(r)).collect();
        Ok(VesselLatent {
            control_points: self
                .control_points
                .iter()
                .map(|&[x, y, z]| Vec3::new(T::of(x), T::of(y), T::of(z)))
                .collect(),
            radii: RadialProfile::new(n, m, radii)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridKnots {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// `{centers, tangents, frame_w, radii, degrees, knots}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub centers: Vec<[f64; 3]>,
    pub tangents: Vec<[f64; 3]>,
    pub frame_w: Vec<[f64; 3]>,
    pub radii: Vec<Vec<f64>>,
    pub degrees: [usize; 2],
    pub knots: GridKnots,
}

impl GridFile {
    pub fn new<T: Scalar>(
        skel: &VesselSkeleton<T>,
        radii: &RadialProfile<T>,
        grid: &SurfaceControlGrid<T>,
    ) -> Self {
        let arr = |v: &[Vec3<T>]| v.iter().map(|p| p.cast::<f64>().to_array()).collect();
        GridFile {
            centers: arr(&skel.centers),
            tangents: arr(&skel.tangents),
            frame_w: arr(&skel.frame_w),
            radii: (0..radii.n)
                .map(|i| radii.row(i).iter().map(|r| r.to_f64_lossy()).collect())
                .collect(),
            degrees: [grid.u_knots.degree, grid.v_knots.degree],
            knots: GridKnots {
                u: grid.u_knots.values.iter().map(|k| k.to_f64_lossy()).collect(),
                v: grid.v_knots.values.iter().map(|k| k.to_f64_lossy()).collect(),
            },
        }
    }
}
