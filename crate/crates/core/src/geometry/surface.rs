//! Periodic tube surfaces over a skeleton and a radial profile.

use serde::{Deserialize, Serialize};

use super::frames::VesselSkeleton;
use super::knots::KnotVector;
use super::mesh::QuadMesh;
use super::vec3::Vec3;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Radii grid `r^i_j` (n sections × m directions), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile<T> {
    pub n: usize,
    pub m: usize,
    pub radii: Vec<T>,
}

impl<T: Scalar> RadialProfile<T> {
    pub fn new(n: usize, m: usize, radii: Vec<T>) -> Result<Self> {
        if radii.len() != n * m {
            return Err(Error::validation(format!(
                "radial profile expects {} entries, got {}",
                n * m,
                radii.len()
            )));
        }
        Ok(RadialProfile { n, m, radii })
    }

    pub fn constant(n: usize, m: usize, r: T) -> Self {
        RadialProfile {
            n,
            m,
            radii: vec![r; n * m],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.radii[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, r: T) {
        self.radii[i * self.m + j] = r;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.radii[i * self.m..(i + 1) * self.m]
    }

    pub fn row_means(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).iter().copied().sum::<T>() / T::of(self.m as f64))
            .collect()
    }

    pub fn validate_positive(&self) -> Result<()> {
        match self.radii.iter().position(|&r| !(r > T::zero() && r.is_finite())) {
            Some(k) => Err(Error::validation(format!(
                "radius at ({}, {}) must be positive and finite",
                k / self.m,
                k % self.m
            ))),
            None => Ok(()),
        }
    }
}

/// Surface control net `s^i_j = q^i + r^i_j ŵ_{i,j}` with radial wrap
/// padding, weights and knot vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceControlGrid<T> {
    pub n: usize,
    pub m: usize,
    /// n×m, row-major.
    pub points: Vec<Vec3<T>>,
    /// n×(m+1+d_v): columns `[s_{m-1}, s_0 … s_{m-1}, s_0 … s_{d_v-1}]`.
    pub padded_points: Vec<Vec3<T>>,
    /// n×m weights, all 1 unless set otherwise.
    pub weights: Vec<T>,
    pub u_knots: KnotVector<T>,
    pub v_knots: KnotVector<T>,
}

/// Column of the unpadded grid that padded column `jp` copies.
#[inline]
pub fn padded_source(jp: usize, m: usize) -> usize {
    if jp == 0 {
        m - 1
    } else {
        (jp - 1) % m
    }
}

impl<T: Scalar> SurfaceControlGrid<T> {
    pub fn padded_width(&self) -> usize {
        self.m + 1 + self.v_knots.degree
    }

    #[inline]
    pub fn padded(&self, i: usize, jp: usize) -> Vec3<T> {
        self.padded_points[i * self.padded_width() + jp]
    }

    #[inline]
    fn padded_weight(&self, i: usize, jp: usize) -> T {
        self.weights[i * self.m + padded_source(jp, self.m)]
    }

    /// Rebuilds padded points after `points` changed.
    pub fn refresh_padding(&mut self) {
        let w = self.padded_width();
        let mut padded = Vec::with_capacity(self.n * w);
        for i in 0..self.n {
            for jp in 0..w {
                padded.push(self.points[i * self.m + padded_source(jp, self.m)]);
            }
        }
        self.padded_points = padded;
    }
}

/// Builds the surface control net from a skeleton and radii.
///
/// `u_knots` is the streamwise knot vector (the centerline's); the radial
/// direction uses the unclamped periodic knots of degree `d_v`.
pub fn skeleton_points<T: Scalar>(
    skel: &VesselSkeleton<T>,
    radii: &RadialProfile<T>,
    u_knots: &KnotVector<T>,
    d_v: usize,
) -> Result<SurfaceControlGrid<T>> {
    let n = skel.n();
    let m = skel.m;
    if radii.n != n || radii.m != m {
        return Err(Error::validation(format!(
            "radial profile {}×{} does not match skeleton {n}×{m}",
            radii.n, radii.m
        )));
    }
    if u_knots.num_basis() != n {
        return Err(Error::validation(format!(
            "streamwise knots support {} rows, skeleton has {n}",
            u_knots.num_basis()
        )));
    }
    radii.validate_positive()?;
    let mut points = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            points.push(skel.centers[i] + skel.directions[i][j] * radii.get(i, j));
        }
    }
    let mut grid = SurfaceControlGrid {
        n,
        m,
        points,
        padded_points: Vec::new(),
        weights: vec![T::one(); n * m],
        u_knots: u_knots.clone(),
        v_knots: KnotVector::periodic_radial(m, d_v)?,
    };
    grid.refresh_padding();
    Ok(grid)
}

/// Rational tensor-product surface value at `(u, v)`.
pub fn eval_surface<T: Scalar>(grid: &SurfaceControlGrid<T>, u: T, v: T) -> Result<Vec3<T>> {
    let bu = grid.u_knots.basis_functions(u)?;
    let bv = grid.v_knots.basis_functions(v)?;
    let mut num = Vec3::zero();
    let mut den = T::zero();
    for (a, &nu) in bu.values.iter().enumerate() {
        let i = bu.start + a;
        for (b, &nv) in bv.values.iter().enumerate() {
            let jp = bv.start + b;
            let w = nu * nv * grid.padded_weight(i, jp);
            num += grid.padded(i, jp) * w;
            den += w;
        }
    }
    Ok(num * (T::one() / den))
}

/// Basis tables for evaluating a surface on a fixed `(u, v)` lattice.
#[derive(Debug, Clone)]
pub struct SurfaceSampler<T> {
    pub us: Vec<T>,
    pub vs: Vec<T>,
    u_rows: Vec<(usize, Vec<T>)>,
    v_rows: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> SurfaceSampler<T> {
    pub fn new(
        u_knots: &KnotVector<T>,
        v_knots: &KnotVector<T>,
        us: Vec<T>,
        vs: Vec<T>,
    ) -> Result<Self> {
        let rows = |kv: &KnotVector<T>, ps: &[T]| -> Result<Vec<(usize, Vec<T>)>> {
            ps.iter()
                .map(|&p| kv.basis_functions(p).map(|b| (b.start, b.values)))
                .collect()
        };
        Ok(SurfaceSampler {
            u_rows: rows(u_knots, &us)?,
            v_rows: rows(v_knots, &vs)?,
            us,
            vs,
        })
    }

    /// Lattice with `res_u` streamwise samples on `[0, 1]` and `res_v`
    /// radial samples on `[0, 1)` (the seam is not duplicated).
    pub fn lattice(grid: &SurfaceControlGrid<T>, res_u: usize, res_v: usize) -> Result<Self> {
        Self::lattice_for(&grid.u_knots, &grid.v_knots, res_u, res_v)
    }

    pub fn lattice_for(
        u_knots: &KnotVector<T>,
        v_knots: &KnotVector<T>,
        res_u: usize,
        res_v: usize,
    ) -> Result<Self> {
        if res_u < 2 || res_v < 2 {
            return Err(Error::validation(format!(
                "mesh resolution {res_u}×{res_v} must be at least 2×2"
            )));
        }
        let us = crate::geometry::curve::uniform_params::<T>(res_u);
        let vs = (0..res_v)
            .map(|b| T::of(b as f64) / T::of(res_v as f64))
            .collect();
        Self::new(u_knots, v_knots, us, vs)
    }

    pub fn len(&self) -> usize {
        self.us.len() * self.vs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluates every lattice point, `u` major.
    pub fn eval(&self, grid: &SurfaceControlGrid<T>) -> Vec<Vec3<T>> {
        let mut out = Vec::with_capacity(self.len());
        for (su, wu) in &self.u_rows {
            for (sv, wv) in &self.v_rows {
                let mut num = Vec3::zero();
                let mut den = T::zero();
                for (a, &nu) in wu.iter().enumerate() {
                    for (b, &nv) in wv.iter().enumerate() {
                        let w = nu * nv * grid.padded_weight(su + a, sv + b);
                        num += grid.padded(su + a, sv + b) * w;
                        den += w;
                    }
                }
                out.push(num * (T::one() / den));
            }
        }
        out
    }

    /// Transpose of [`eval`](Self::eval) with respect to the unpadded
    /// control points: returns `∂L/∂s^i_j` given `∂L/∂P` per lattice point.
    pub fn pullback(&self, grid: &SurfaceControlGrid<T>, grads: &[Vec3<T>]) -> Vec<Vec3<T>> {
        let mut out = vec![Vec3::zero(); grid.n * grid.m];
        let mut k = 0;
        for (su, wu) in &self.u_rows {
            for (sv, wv) in &self.v_rows {
                let g = grads[k];
                k += 1;
                let mut den = T::zero();
                for (a, &nu) in wu.iter().enumerate() {
                    for (b, &nv) in wv.iter().enumerate() {
                        den += nu * nv * grid.padded_weight(su + a, sv + b);
                    }
                }
                let inv = T::one() / den;
                for (a, &nu) in wu.iter().enumerate() {
                    for (b, &nv) in wv.iter().enumerate() {
                        let i = su + a;
                        let jp = sv + b;
                        let c = nu * nv * grid.padded_weight(i, jp) * inv;
                        out[i * grid.m + padded_source(jp, grid.m)] += g * c;
                    }
                }
            }
        }
        out
    }
}

/// Structured quad mesh of the surface: `res_u × res_v` vertices, the
/// radial seam welded.
pub fn eval_mesh<T: Scalar>(
    grid: &SurfaceControlGrid<T>,
    res_u: usize,
    res_v: usize,
) -> Result<QuadMesh<T>> {
    let sampler = SurfaceSampler::lattice(grid, res_u, res_v)?;
    Ok(QuadMesh::structured(sampler.eval(grid), res_u, res_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::curve::fit_curve;

    fn straight_grid(m: usize, r: f64) -> (SurfaceControlGrid<f64>, VesselSkeleton<f64>) {
        let s: Vec<_> = (0..8).map(|k| Vec3::new(0.0, 0.0, k as f64)).collect();
        let poly = fit_curve(&s, 3).unwrap();
        let skel = VesselSkeleton::from_polygon(&poly, m).unwrap();
        let prof = RadialProfile::constant(8, m, r);
        (skeleton_points(&skel, &prof, &poly.knots, 3).unwrap(), skel)
    }

    #[test]
    fn padding_layout() {
        let (g, _) = straight_grid(5, 1.0);
        assert_eq!(g.padded_width(), 9);
        for i in 0..g.n {
            assert_eq!(g.padded(i, 0), g.points[i * 5 + 4]);
            for j in 0..5 {
                assert_eq!(g.padded(i, j + 1), g.points[i * 5 + j]);
            }
            for j in 0..3 {
                assert_eq!(g.padded(i, 6 + j), g.points[i * 5 + j]);
            }
        }
    }

    #[test]
    fn radial_closure() {
        let (g, _) = straight_grid(7, 2.0);
        for k in 0..=20 {
            let u = k as f64 / 20.0;
            let a = eval_surface(&g, u, 0.0).unwrap();
            let b = eval_surface(&g, u, 1.0).unwrap();
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn nonpositive_radius_rejected() {
        let (_, skel) = straight_grid(4, 1.0);
        let s: Vec<_> = (0..8).map(|k| Vec3::new(0.0, 0.0, k as f64)).collect();
        let poly = fit_curve(&s, 3).unwrap();
        let mut prof = RadialProfile::constant(8, 4, 1.0);
        prof.set(3, 2, 0.0);
        assert!(skeleton_points(&skel, &prof, &poly.knots, 3).is_err());
        prof.set(3, 2, 1e-6);
        let g = skeleton_points(&skel, &prof, &poly.knots, 3).unwrap();
        assert!((g.points[3 * 4 + 2] - skel.centers[3]).norm() < 2e-6);
    }

    #[test]
    fn lattice_matches_pointwise_eval() {
        let (g, _) = straight_grid(6, 1.5);
        let s = SurfaceSampler::lattice(&g, 5, 7).unwrap();
        let pts = s.eval(&g);
        for (a, &u) in s.us.iter().enumerate() {
            for (b, &v) in s.vs.iter().enumerate() {
                let p = eval_surface(&g, u, v).unwrap();
                assert!((p - pts[a * 7 + b]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn mesh_counts() {
        let (g, _) = straight_grid(6, 1.5);
        let mesh = eval_mesh(&g, 2, 3).unwrap();
        assert_eq!(mesh.vertices.len(), 6);
        assert_eq!(mesh.quads.len(), 3);
        assert!(eval_mesh(&g, 1, 3).is_err());
    }
}
