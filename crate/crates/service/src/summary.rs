//! Ensemble summaries: decoded meshes plus per-section spread.

use serde::{Deserialize, Serialize};
use vesselgen::cohort::{BranchId, BranchPreset};
use vesselgen::geometry::vessel::SurfaceMap;
use vesselgen::{Error, Point, QuadMesh, Result, VesselLatent};

/// Indexed quad mesh on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshPayload {
    pub vertices: Vec<Point>,
    pub faces: Vec<[usize; 4]>,
}

impl From<QuadMesh> for MeshPayload {
    fn from(m: QuadMesh) -> Self {
        MeshPayload {
            vertices: m.vertices,
            faces: m.quads,
        }
    }
}

/// Spread of one cross-section across the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpread {
    /// RMS distance of the section centers from their mean.
    pub position_std: f64,
    /// Standard deviation of the section's mean radius.
    pub radius_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub branch: BranchId,
    pub n: usize,
    pub m: usize,
    pub latents: Vec<VesselLatent>,
    pub meshes: Vec<MeshPayload>,
    pub sections: Vec<SectionSpread>,
    /// Sum of both spreads over all sections.
    pub total_uncertainty: f64,
}

pub fn summarize(branch: BranchId, preset: BranchPreset, latents: Vec<VesselLatent>) -> Result<EnsembleSummary> {
    if latents.is_empty() {
        return Err(Error::Validation("empty ensemble".into()));
    }
    let (n, m) = (preset.n, preset.m);
    if latents.iter().any(|l| l.n() != n || l.m() != m) {
        return Err(Error::Validation(format!("ensemble latents do not match the {branch} preset")));
    }
    let map = SurfaceMap::<f64>::new(n, m, 2, 3)?;
    let mut centers = Vec::with_capacity(latents.len());
    let mut meshes = Vec::with_capacity(latents.len());
    for l in &latents {
        centers.push(map.skeleton(&l.control_points)?.centers);
        meshes.push(l.mesh(preset.mesh_u, preset.mesh_v)?.into());
    }
    let k = latents.len() as f64;
    let sections: Vec<SectionSpread> = (0..n)
        .map(|i| {
            let mean = centers.iter().fold(Point::zero(), |a, c| a + c[i]) * (1.0 / k);
            let pos = centers.iter().map(|c| (c[i] - mean).norm_squared()).sum::<f64>() / k;
            let radii: Vec<f64> = latents
                .iter()
                .map(|l| l.radii.radii[i * m..(i + 1) * m].iter().sum::<f64>() / m as f64)
                .collect();
            let rm = radii.iter().sum::<f64>() / k;
            let rv = radii.iter().map(|r| (r - rm) * (r - rm)).sum::<f64>() / k;
            SectionSpread {
                position_std: pos.sqrt(),
                radius_std: rv.sqrt(),
            }
        })
        .collect();
    let total_uncertainty = sections.iter().map(|s| s.position_std + s.radius_std).sum();
    Ok(EnsembleSummary {
        branch,
        n,
        m,
        latents,
        meshes,
        sections,
        total_uncertainty,
    })
}
