//! Structured quad meshes and Wavefront OBJ text I/O.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::vec3::Vec3;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    /// Zero-based vertex indices, counterclockwise.
    pub quads: Vec<[usize; 4]>,
    pub res_u: usize,
    pub res_v: usize,
}

impl<T: Scalar> QuadMesh<T> {
    /// Connects a `res_u × res_v` lattice (u major), wrapping in v.
    pub fn structured(vertices: Vec<Vec3<T>>, res_u: usize, res_v: usize) -> Self {
        debug_assert_eq!(vertices.len(), res_u * res_v);
        let idx = |a: usize, b: usize| a * res_v + b % res_v;
        let mut quads = Vec::with_capacity((res_u - 1) * res_v);
        for a in 0..res_u - 1 {
            for b in 0..res_v {
                quads.push([idx(a, b), idx(a + 1, b), idx(a + 1, b + 1), idx(a, b + 1)]);
            }
        }
        QuadMesh {
            vertices,
            quads,
            res_u,
            res_v,
        }
    }

    /// Wavefront OBJ text (one-based face indices).
    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 40);
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for q in &self.quads {
            let _ = writeln!(s, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1);
        }
        s
    }

    /// Smallest quad diagonal; zero means a collapsed face.
    pub fn min_quad_diagonal(&self) -> T {
        self.quads
            .iter()
            .map(|q| {
                let d1 = (self.vertices[q[0]] - self.vertices[q[2]]).norm();
                let d2 = (self.vertices[q[1]] - self.vertices[q[3]]).norm();
                d1.min(d2)
            })
            .fold(T::infinity(), T::min)
    }
}

/// Polygon mesh parsed from OBJ; faces may be empty for point clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<Vec<usize>>,
}

/// Parses `v` and `f` records; other records are ignored.
pub fn parse_obj<T: Scalar>(text: &str) -> Result<PolyMesh<T>> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xs: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                if xs.len() != 3 || xs.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Parse(format!("line {}: bad vertex", lineno + 1)));
                }
                vertices.push(Vec3::new(T::of(xs[0]), T::of(xs[1]), T::of(xs[2])));
            }
            Some("f") => {
                let mut face = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let k: usize = first
                        .parse()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                    if k == 0 {
                        return Err(Error::Parse(format!("line {}: zero face index", lineno + 1)));
                    }
                    face.push(k - 1);
                }
                if face.len() < 3 {
                    return Err(Error::Parse(format!("line {}: face with < 3 vertices", lineno + 1)));
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    if let Some(bad) = faces.iter().flatten().find(|&&k| k >= vertices.len()) {
        return Err(Error::Parse(format!("face index {} out of range", bad + 1)));
    }
    Ok(PolyMesh { vertices, faces })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_round_trip() {
        let verts: Vec<Vec3<f64>> = (0..6)
            .map(|k| Vec3::new(k as f64, 0.5 * k as f64, -1.25))
            .collect();
        let mesh = QuadMesh::structured(verts.clone(), 2, 3);
        let parsed: PolyMesh<f64> = parse_obj(&mesh.to_obj()).unwrap();
        assert_eq!(parsed.vertices, verts);
        assert_eq!(parsed.faces.len(), 3);
        assert_eq!(parsed.faces[2], vec![2, 5, 3, 0]);
    }

    #[test]
    fn malformed_obj() {
        assert!(parse_obj::<f64>("v 1 2").is_err());
        assert!(parse_obj::<f64>("v 1 2 3\nf 1 2 4").is_err());
        assert!(parse_obj::<f64>("v 1 2 x").is_err());
    }
}
