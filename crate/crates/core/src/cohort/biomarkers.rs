//! Nine geometric biomarkers of an aortic centerline with radii.
//!
//! Landmarks are placed by arc length along the centerline (inlet first):
//! PA at 10%, PD at 90%, PT at the apex (farthest point from the
//! inlet–outlet chord). `h` is the apex distance to the chord and `w` the
//! distance between the two limb points at half that height. LPD is the
//! arc length from the inlet to PD. Section radii are the mean over each
//! cross-section; `radius_sd` is their population standard deviation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::encode::cumulative_length;
use crate::error::{Error, Result};
use crate::{Point, QuadMesh, VesselLatent};

pub const BIOMARKER_NAMES: [&str; 9] = ["PA", "PT", "PD", "LPD", "h", "w", "h_over_w", "tortuosity", "radius_sd"];

/// Dense centerline samples used when evaluating a latent.
pub const CURVE_SAMPLES: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerTable {
    #[serde(rename = "PA")]
    pub pa: f64,
    #[serde(rename = "PT")]
    pub pt: f64,
    #[serde(rename = "PD")]
    pub pd: f64,
    #[serde(rename = "LPD")]
    pub lpd: f64,
    pub h: f64,
    pub w: f64,
    pub h_over_w: f64,
    pub tortuosity: f64,
    pub radius_sd: f64,
}

impl BiomarkerTable {
    pub fn values(&self) -> [f64; 9] {
        [self.pa, self.pt, self.pd, self.lpd, self.h, self.w, self.h_over_w, self.tortuosity, self.radius_sd]
    }
}

fn interp(cum: &[f64], vals: &[f64], s: f64) -> f64 {
    let k = cum.partition_point(|&c| c < s).clamp(1, cum.len() - 1);
    let (s0, s1) = (cum[k - 1], cum[k]);
    let t = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
    vals[k - 1] + t * (vals[k] - vals[k - 1])
}

/// Point where the distance-to-chord profile crosses `level` between
/// samples `a` (above) and `b` (at or below).
fn crossing(points: &[Point], dist: &[f64], a: usize, b: usize, level: f64) -> Point {
    let t = if dist[a] > dist[b] { (dist[a] - level) / (dist[a] - dist[b]) } else { 0.0 };
    points[a] + (points[b] - points[a]) * t
}

/// Biomarkers of a centerline polyline with one radius per point; the
/// spread is taken over `section_radii`.
pub fn biomarkers_from_tube(points: &[Point], radii: &[f64], section_radii: &[f64]) -> Result<BiomarkerTable> {
    if points.len() < 3 || radii.len() != points.len() || section_radii.is_empty() {
        return Err(Error::validation("need ≥ 3 centerline points with one radius each"));
    }
    if !points.iter().all(|p| p.is_finite()) || !radii.iter().chain(section_radii).all(|r| r.is_finite()) {
        return Err(Error::validation("non-finite centerline or radius"));
    }
    let cum = cumulative_length(points);
    let length = cum[cum.len() - 1];
    let (p0, p1) = (points[0], points[points.len() - 1]);
    let chord_vec = p1 - p0;
    let chord = chord_vec.norm();
    if !(length > 0.0) || chord <= 1e-9 * length {
        return Err(Error::Degenerate("centerline is closed or has zero length".into()));
    }
    let axis = chord_vec * (1.0 / chord);
    let dist: Vec<f64> = points
        .iter()
        .map(|&p| {
            let r = p - p0;
            (r - axis * r.dot(axis)).norm()
        })
        .collect();
    let apex = (0..points.len()).fold(0, |best, k| if dist[k] > dist[best] { k } else { best });
    let h = dist[apex];
    let w = if h <= 1e-12 * length {
        chord
    } else {
        let half = 0.5 * h;
        let left = (0..apex).rev().find(|&k| dist[k] <= half).expect("inlet lies on the chord");
        let right = (apex + 1..points.len()).find(|&k| dist[k] <= half).expect("outlet lies on the chord");
        let a = crossing(points, &dist, left + 1, left, half);
        let b = crossing(points, &dist, right - 1, right, half);
        (a - b).norm()
    };
    if !(w > 0.0) {
        return Err(Error::Degenerate("arch width is zero".into()));
    }
    let mean = section_radii.iter().sum::<f64>() / section_radii.len() as f64;
    let var = section_radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / section_radii.len() as f64;
    Ok(BiomarkerTable {
        pa: interp(&cum, radii, 0.1 * length),
        pt: radii[apex],
        pd: interp(&cum, radii, 0.9 * length),
        lpd: 0.9 * length,
        h,
        w,
        h_over_w: h / w,
        tortuosity: length / chord,
        radius_sd: var.sqrt(),
    })
}

/// Biomarkers of a latent: dense centerline samples with section mean
/// radii interpolated in the curve parameter.
pub fn biomarkers(latent: &VesselLatent) -> Result<BiomarkerTable> {
    let poly = latent.polygon()?;
    let points = poly.sample(CURVE_SAMPLES)?;
    let rows = latent.radii.row_means();
    let n = rows.len();
    let radii: Vec<f64> = (0..CURVE_SAMPLES)
        .map(|k| {
            let u = k as f64 / (CURVE_SAMPLES - 1) as f64 * (n - 1) as f64;
            let i = (u.floor() as usize).min(n - 2);
            let t = u - i as f64;
            rows[i] + t * (rows[i + 1] - rows[i])
        })
        .collect();
    biomarkers_from_tube(&points, &radii, &rows)
}

/// Biomarkers of a structured tube mesh: ring centroids form the
/// centerline and the mean centroid distance of each ring its radius.
pub fn biomarkers_from_mesh(mesh: &QuadMesh) -> Result<BiomarkerTable> {
    let (nu, nv) = (mesh.res_u, mesh.res_v);
    if nu < 3 || nv < 3 || mesh.vertices.len() != nu * nv {
        return Err(Error::validation("mesh is not a structured tube lattice"));
    }
    let mut centers = Vec::with_capacity(nu);
    let mut radii = Vec::with_capacity(nu);
    for a in 0..nu {
        let ring = &mesh.vertices[a * nv..(a + 1) * nv];
        let c = crate::geometry::centroid(ring).expect("non-empty ring");
        radii.push(ring.iter().map(|&p| (p - c).norm()).sum::<f64>() / nv as f64);
        centers.push(c);
    }
    biomarkers_from_tube(&centers, &radii, &radii)
}

/// One header row, then one row per table.
pub fn write_biomarker_csv<W: Write>(tables: &[BiomarkerTable], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in tables {
        w.serialize(t).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_biomarker_csv<R: std::io::Read>(input: R) -> Result<Vec<BiomarkerTable>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}
