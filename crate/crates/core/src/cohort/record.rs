//! Vessel records and their on-disk formats: polyline centerlines and OBJ
//! surfaces.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::branch::BranchId;
use crate::error::{Error, Result};
use crate::geometry::{centroid, parse_obj, Vec3};
use crate::{Point, VesselLatent};

/// How the stored centerline direction is interpreted on ingest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Orientation {
    /// Trust the file order.
    #[default]
    AsStated,
    /// The file runs from the distal end; always reverse.
    Reverse,
    /// Start from whichever end is lower along `up`.
    LowestFirst { up: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselRecord {
    pub branch: BranchId,
    pub centerline: Vec<Point>,
    /// Surface vertices (a point cloud when `faces` is empty).
    pub surface: Vec<Point>,
    #[serde(default)]
    pub faces: Vec<Vec<usize>>,
    #[serde(default)]
    pub latent: Option<VesselLatent>,
    /// True when ingestion reversed the stored centerline.
    #[serde(default)]
    pub reversed: bool,
}

impl VesselRecord {
    pub fn validate(&self) -> Result<()> {
        if self.surface.is_empty() {
            return Err(Error::validation(format!("{} record has an empty surface", self.branch)));
        }
        if self.centerline.len() < 2 {
            return Err(Error::validation(format!("{} record needs at least 2 centerline points", self.branch)));
        }
        if !self.centerline.iter().chain(&self.surface).all(|p| p.is_finite()) {
            return Err(Error::validation("non-finite coordinate in record"));
        }
        if self.faces.iter().flatten().any(|&k| k >= self.surface.len()) {
            return Err(Error::validation("face index out of range"));
        }
        Ok(())
    }

    /// Subtracts the surface mean from every coordinate.
    pub fn recenter(&mut self) {
        if let Some(c) = centroid(&self.surface) {
            for p in self.centerline.iter_mut().chain(self.surface.iter_mut()) {
                *p = *p - c;
            }
            if let Some(l) = self.latent.as_mut() {
                for p in l.control_points.iter_mut() {
                    *p = *p - c;
                }
            }
        }
    }

    pub fn centerline_text(&self) -> String {
        write_polyline(&self.centerline)
    }

    pub fn surface_obj(&self) -> String {
        let mut s = String::with_capacity(self.surface.len() * 40);
        for v in &self.surface {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            s.push('f');
            for k in f {
                let _ = write!(s, " {}", k + 1);
            }
            s.push('\n');
        }
        s
    }
}

/// One `x,y,z` row per point; commas and/or whitespace separate fields,
/// `#` starts a comment, and a non-numeric first row is taken as a header.
pub fn parse_polyline(text: &str) -> Result<Vec<Point>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|t| t.parse::<f64>()).collect();
        match parsed {
            Ok(xs) if xs.len() == 3 && xs.iter().all(|x| x.is_finite()) => out.push(Vec3::new(xs[0], xs[1], xs[2])),
            Err(_) if out.is_empty() && fields.len() == 3 && fields.iter().all(|t| t.parse::<f64>().is_err()) => {}
            _ => return Err(Error::Parse(format!("line {}: expected three finite numbers", lineno + 1))),
        }
    }
    Ok(out)
}

pub fn write_polyline(points: &[Point]) -> String {
    let mut s = String::with_capacity(points.len() * 60);
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, p.z);
    }
    s
}

/// Builds a record from centerline and OBJ text, enforcing orientation and
/// recentering on the surface mean.
pub fn ingest(centerline: &str, surface_obj: &str, branch: BranchId, orientation: Orientation) -> Result<VesselRecord> {
    ingest_record(centerline, surface_obj, branch, orientation, None)
}

/// [`ingest`] with a latent stored in the same frame as the files; it is
/// shifted along with the geometry.
pub fn ingest_record(
    centerline: &str,
    surface_obj: &str,
    branch: BranchId,
    orientation: Orientation,
    latent: Option<VesselLatent>,
) -> Result<VesselRecord> {
    let mut line = parse_polyline(centerline)?;
    let mesh = parse_obj::<f64>(surface_obj)?;
    if line.is_empty() {
        return Err(Error::validation("centerline file has no points"));
    }
    if mesh.vertices.is_empty() {
        return Err(Error::validation("surface file has no vertices"));
    }
    let reversed = match orientation {
        Orientation::AsStated => false,
        Orientation::Reverse => true,
        Orientation::LowestFirst { up } => {
            let up = Vec3::new(up[0], up[1], up[2]);
            if up.norm() == 0.0 {
                return Err(Error::validation("up axis must be non-zero"));
            }
            line[line.len() - 1].dot(up) < line[0].dot(up)
        }
    };
    if reversed {
        line.reverse();
    }
    let mut rec = VesselRecord {
        branch,
        centerline: line,
        surface: mesh.vertices,
        faces: mesh.faces,
        latent,
        reversed,
    };
    rec.validate()?;
    rec.recenter();
    Ok(rec)
}

pub fn ingest_files(centerline: &Path, surface: &Path, branch: BranchId, orientation: Orientation) -> Result<VesselRecord> {
    let c = std::fs::read_to_string(centerline)?;
    let s = std::fs::read_to_string(surface)?;
    ingest(&c, &s, branch, orientation)
}
