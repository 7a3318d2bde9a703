//! Branch-location statistics and rigid assembly of multi-branch scenes.

use std::collections::BTreeMap;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::branch::BranchId;
use super::encode::{cumulative_length, point_at_length};
use crate::baselines::{fit_gaussian, GaussianModel};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::{Point, QuadMesh, VesselLatent};

/// Order of the entries of a topology vector.
pub const TOPOLOGY_ORDER: [BranchId; 4] = [BranchId::Rcca, BranchId::Lsa, BranchId::Lcca, BranchId::Rsa];
/// Sampled split locations are clamped into this interval.
pub const SPLIT_CLAMP: (f64, f64) = (0.02, 0.98);

/// Relative arc-length position of each branch root on its parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchTopology {
    pub e: [f64; 4],
}

impl BranchTopology {
    pub fn validate(&self) -> Result<()> {
        if let Some((k, v)) = self.e.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!("split location of {} is {v}, outside (0, 1)", TOPOLOGY_ORDER[k])));
        }
        Ok(())
    }

    pub fn get(&self, branch: BranchId) -> Option<f64> {
        TOPOLOGY_ORDER.iter().position(|&b| b == branch).map(|k| self.e[k])
    }
}

/// Multivariate Gaussian over the split vectors.
pub fn fit_branching(topologies: &[BranchTopology]) -> Result<GaussianModel> {
    for t in topologies {
        t.validate()?;
    }
    let rows: Vec<Vec<f64>> = topologies.iter().map(|t| t.e.to_vec()).collect();
    fit_gaussian(&rows)
}

/// Clamps a raw draw into [`SPLIT_CLAMP`]; the flag reports whether any
/// entry moved.
pub fn clamp_topology(raw: &[f64]) -> (BranchTopology, bool) {
    let mut e = [0.0; 4];
    let mut clamped = false;
    for (k, v) in raw.iter().take(4).enumerate() {
        e[k] = v.clamp(SPLIT_CLAMP.0, SPLIT_CLAMP.1);
        clamped |= e[k] != *v;
    }
    (BranchTopology { e }, clamped)
}

pub fn sample_branching<R: Rng + ?Sized>(model: &GaussianModel, rng: &mut R) -> Result<BranchTopology> {
    if model.dim() != 4 {
        return Err(Error::validation(format!("topology model has dimension {}, expected 4", model.dim())));
    }
    Ok(clamp_topology(&model.sample(rng)).0)
}

/// A branch ready for placement: a dense centerline and its tube mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchGeometry {
    pub branch: BranchId,
    pub centerline: Vec<Point>,
    pub mesh: QuadMesh,
}

impl BranchGeometry {
    /// Decodes a latent at the branch's preset mesh resolution.
    pub fn from_latent(branch: BranchId, latent: &VesselLatent) -> Result<Self> {
        let p = branch.preset();
        Ok(BranchGeometry {
            branch,
            centerline: latent.polygon()?.sample(p.mesh_u)?,
            mesh: latent.mesh(p.mesh_u, p.mesh_v)?,
        })
    }

    /// Mean distance of the first mesh ring to the root center.
    pub fn root_radius(&self) -> f64 {
        let ring = &self.mesh.vertices[..self.mesh.res_v];
        ring.iter().map(|&p| (p - self.centerline[0]).norm()).sum::<f64>() / ring.len() as f64
    }

    fn transformed(&self, rot: &Rotation3<f64>, from: Point, to: Point) -> BranchGeometry {
        let f = |p: &Point| {
            let v = rot * Vector3::new(p.x - from.x, p.y - from.y, p.z - from.z);
            Vec3::new(v.x + to.x, v.y + to.y, v.z + to.z)
        };
        BranchGeometry {
            branch: self.branch,
            centerline: self.centerline.iter().map(f).collect(),
            mesh: QuadMesh {
                vertices: self.mesh.vertices.iter().map(f).collect(),
                ..self.mesh.clone()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionReport {
    pub branch: BranchId,
    pub parent: BranchId,
    pub e: f64,
    pub root_radius: f64,
    /// Distance from the root center to the parent surface, negative when
    /// the root lies inside the parent tube.
    pub signed_distance: f64,
    /// `−signed_distance`: how deep the root sits inside the parent.
    pub depth: f64,
    /// Root farther outside the parent surface than its own radius.
    pub detached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub branches: BTreeMap<BranchId, BranchGeometry>,
    pub junctions: Vec<JunctionReport>,
}

fn to_na(p: Point) -> Vector3<f64> {
    Vector3::new(p.x, p.y, p.z)
}

/// Preferred exit direction of a branch, before removing the component
/// along the parent tangent.
fn outward_hint(branch: BranchId) -> Point {
    match branch {
        BranchId::Rsa => Vec3::new(-1.0, 0.0, 0.0),
        _ => Vec3::new(0.0, 0.0, 1.0),
    }
}

fn outward(tangent: Point, hint: Point) -> Point {
    let o = hint - tangent * hint.dot(tangent);
    o.normalized().unwrap_or_else(|| {
        let axis = Vec3::axis(tangent.least_axis());
        (axis - tangent * axis.dot(tangent)).normalized().expect("least axis is never parallel")
    })
}

/// Rotation taking unit `a` onto unit `b`, including the antiparallel case.
fn rotation_between(a: Point, b: Point) -> Rotation3<f64> {
    let (va, vb) = (to_na(a), to_na(b));
    Rotation3::rotation_between(&va, &vb).unwrap_or_else(|| {
        let axis = Vec3::axis(a.least_axis());
        let perp = (axis - a * axis.dot(a)).normalized().expect("least axis is never parallel");
        Rotation3::from_axis_angle(&Unit::new_normalize(to_na(perp)), std::f64::consts::PI)
    })
}

/// Signed distance from `p` to a structured tube surface: nearest vertex
/// distance, negative when `p` is closer to that vertex's ring center
/// than the vertex is.
fn signed_tube_distance(mesh: &QuadMesh, p: Point) -> f64 {
    let (k, d2) = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(k, &q)| (k, q.dist_squared(p)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let ring = k / mesh.res_v;
    let verts = &mesh.vertices[ring * mesh.res_v..(ring + 1) * mesh.res_v];
    let c = crate::geometry::centroid(verts).expect("non-empty ring");
    let d = d2.sqrt();
    if (p - c).norm() < (mesh.vertices[k] - c).norm() {
        -d
    } else {
        d
    }
}

/// Places every child so its root center sits on the parent centerline
/// at arc-length fraction `e` with its initial tangent along the local
/// outward direction. The aorta stays fixed. Input order is irrelevant.
pub fn assemble(branches: &[BranchGeometry], topology: &BranchTopology) -> Result<Scene> {
    topology.validate()?;
    let mut by_id: BTreeMap<BranchId, &BranchGeometry> = BTreeMap::new();
    for b in branches {
        if b.centerline.len() < 2 || b.mesh.vertices.len() != b.mesh.res_u * b.mesh.res_v || b.mesh.res_v == 0 {
            return Err(Error::validation(format!("{} geometry is not a structured tube", b.branch)));
        }
        if by_id.insert(b.branch, b).is_some() {
            return Err(Error::validation(format!("branch {} given twice", b.branch)));
        }
    }
    let aorta = by_id
        .get(&BranchId::Aorta)
        .ok_or_else(|| Error::validation("assembly needs the aorta"))?;
    let mut placed: BTreeMap<BranchId, BranchGeometry> = BTreeMap::new();
    placed.insert(BranchId::Aorta, (*aorta).clone());
    let mut junctions = Vec::new();
    // parents before children
    for id in [BranchId::Rcca, BranchId::Lsa, BranchId::Lcca, BranchId::Rsa] {
        let Some(geom) = by_id.get(&id) else { continue };
        let parent_id = id.parent().expect("children have parents");
        let parent = placed
            .get(&parent_id)
            .ok_or_else(|| Error::validation(format!("{id} needs its parent {parent_id}")))?;
        let e = topology.get(id).expect("all children have a split entry");
        let cum = cumulative_length(&parent.centerline);
        let total = cum[cum.len() - 1];
        let anchor = point_at_length(&parent.centerline, &cum, e * total);
        let h = 1e-3 * total;
        let ahead = point_at_length(&parent.centerline, &cum, (e * total + h).min(total));
        let behind = point_at_length(&parent.centerline, &cum, (e * total - h).max(0.0));
        let tangent = (ahead - behind)
            .normalized()
            .ok_or_else(|| Error::Degenerate(format!("{parent_id} centerline stalls at e = {e}")))?;
        let dir = outward(tangent, outward_hint(id));
        let t0 = (geom.centerline[1] - geom.centerline[0])
            .normalized()
            .ok_or_else(|| Error::Degenerate(format!("{id} centerline starts with a zero segment")))?;
        let rot = rotation_between(t0, dir);
        let moved = geom.transformed(&rot, geom.centerline[0], anchor);
        let root_radius = moved.root_radius();
        let signed = signed_tube_distance(&parent.mesh, moved.centerline[0]);
        junctions.push(JunctionReport {
            branch: id,
            parent: parent_id,
            e,
            root_radius,
            signed_distance: signed,
            depth: -signed,
            detached: signed > root_radius,
        });
        placed.insert(id, moved);
    }
    Ok(Scene { branches: placed, junctions })
}
