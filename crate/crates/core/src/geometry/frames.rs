//! Cross-section frames: initial radial direction, contour alignment
//! across sections and the rotated radial direction grid.

use serde::{Deserialize, Serialize};

use super::curve::{ControlPolygon, CurveSampler};
use super::vec3::Vec3;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Threshold below which `t_0 × chord` counts as degenerate.
pub const DEGENERATE_CROSS: f64 = 1e-9;

/// Rodrigues rotation of `v` about unit `axis` by `angle`. Positive angles
/// turn counterclockwise when viewed looking along `-axis`.
#[inline]
pub fn rotate<T: Scalar>(axis: Vec3<T>, angle: T, v: Vec3<T>) -> Vec3<T> {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (T::one() - c))
}

/// How to treat a tangent parallel to the end-to-end chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePolicy {
    /// Fail with [`Error::Degenerate`].
    Error,
    /// Cross the tangent with the global axis of least tangent component.
    AxisFallback,
}

/// Which construction produced the initial direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialDirection {
    Chord,
    Axis(usize),
}

/// `ŵ_0 = (t_0 × chord) / |t_0 × chord|`.
pub fn initial_radial_direction<T: Scalar>(
    poly: &ControlPolygon<T>,
    policy: DegeneratePolicy,
) -> Result<Vec3<T>> {
    let t0 = poly.tangents(&poly.params[..1])?[0];
    initial_direction_from(t0, poly.chord(), policy).map(|(w, _)| w)
}

pub(crate) fn initial_direction_from<T: Scalar>(
    t0: Vec3<T>,
    chord: Vec3<T>,
    policy: DegeneratePolicy,
) -> Result<(Vec3<T>, InitialDirection)> {
    let cross = t0.cross(chord);
    let len = chord.norm();
    if len > T::zero() && cross.norm() >= T::of(DEGENERATE_CROSS) * len {
        return Ok((cross.normalized().unwrap(), InitialDirection::Chord));
    }
    match policy {
        DegeneratePolicy::Error => Err(Error::degenerate(
            "tangent at the first section is parallel to the end-to-end chord",
        )),
        DegeneratePolicy::AxisFallback => {
            let k = t0.least_axis();
            let w = t0
                .cross(Vec3::axis(k))
                .normalized()
                .ok_or_else(|| Error::degenerate("zero tangent at the first section"))?;
            Ok((w, InitialDirection::Axis(k)))
        }
    }
}

/// In-plane reference direction used to seed a section contour.
pub(crate) fn contour_reference<T: Scalar>(t: Vec3<T>) -> (Vec3<T>, usize) {
    let k = t.least_axis();
    (t.cross(Vec3::axis(k)).normalized().unwrap_or(Vec3::axis((k + 1) % 3)), k)
}

/// `o` points of a unit circle around `center` in the plane normal to
/// `tangent`, ordered clockwise about the tangent.
pub fn unit_contour<T: Scalar>(center: Vec3<T>, tangent: Vec3<T>, o: usize) -> Vec<Vec3<T>> {
    unit_contour_from(center, tangent, contour_reference(tangent).0, o)
}

/// As [`unit_contour`], starting at the in-plane unit vector `seed`.
pub fn unit_contour_from<T: Scalar>(center: Vec3<T>, tangent: Vec3<T>, seed: Vec3<T>, o: usize) -> Vec<Vec3<T>> {
    let step = T::TAU() / T::of(o as f64);
    (0..o)
        .map(|j| center + rotate(tangent, -(T::of(j as f64) * step), seed))
        .collect()
}

/// How a section contour got its first point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContourSeed {
    /// The initial radial direction (first section).
    Initial,
    /// The previous seed projected onto this section's normal plane.
    Transported,
    /// Projection degenerate; seeded from the global axis with this index.
    Axis(usize),
}

/// Contour seeds for every section: `ŵ_0`, then each seed carried to the
/// next normal plane. Carrying the seed (instead of taking a fixed global
/// axis) keeps the whole skeleton equivariant under rigid motion.
pub(crate) fn contour_seeds<T: Scalar>(tangents: &[Vec3<T>], w0: Vec3<T>) -> (Vec<Vec3<T>>, Vec<ContourSeed>) {
    let mut seeds = vec![w0];
    let mut kinds = vec![ContourSeed::Initial];
    for &t in &tangents[1..] {
        let prev = *seeds.last().unwrap();
        let x = prev - t * t.dot(prev);
        match x.normalized().filter(|_| x.norm() >= T::of(DEGENERATE_CROSS)) {
            Some(a) => {
                seeds.push(a);
                kinds.push(ContourSeed::Transported);
            }
            None => {
                let (a, k) = contour_reference(t);
                seeds.push(a);
                kinds.push(ContourSeed::Axis(k));
            }
        }
    }
    (seeds, kinds)
}

/// Output of the iterative contour alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment<T> {
    /// Aligned reference vectors `ŵ_i`, the first one being the input `ŵ_0`.
    pub directions: Vec<Vec3<T>>,
    /// Selected contour index `j^{i,*}` per section.
    pub indices: Vec<usize>,
    /// Chosen shift `l*` for sections `1..n` (`shifts[0]` is 0 by convention).
    pub shifts: Vec<usize>,
}

/// Propagates the initial radial vector through the stack of contours.
///
/// For each successive section the cyclic index shift minimising the summed
/// point-to-point distance to the previous contour is chosen; ties go to
/// the smallest shift.
pub fn align_radial_frames<T: Scalar>(
    contours: &[Vec<Vec3<T>>],
    centers: &[Vec3<T>],
    w0: Vec3<T>,
) -> Result<Alignment<T>> {
    let n = contours.len();
    if n == 0 || centers.len() != n {
        return Err(Error::validation(format!(
            "{n} contours for {} centers",
            centers.len()
        )));
    }
    let o = contours[0].len();
    if o == 0 || contours.iter().any(|c| c.len() != o) {
        return Err(Error::validation("all contours must share the same point count"));
    }
    let radial = |i: usize, j: usize| -> Result<Vec3<T>> {
        (contours[i][j] - centers[i])
            .normalized()
            .ok_or_else(|| Error::degenerate(format!("contour point {j} of section {i} at center")))
    };
    let mut best_j = 0;
    let mut best_dot = T::neg_infinity();
    for j in 0..o {
        let d = radial(0, j)?.dot(w0);
        if d > best_dot {
            best_dot = d;
            best_j = j;
        }
    }
    let mut directions = vec![w0];
    let mut indices = vec![best_j];
    let mut shifts = vec![0];
    let mut j_prev = best_j;
    for i in 1..n {
        let mut l_star = 0;
        let mut d_star = T::infinity();
        for l in 0..o {
            let d_l: T = (0..o)
                .map(|j| (contours[i - 1][j] - contours[i][(j + l) % o]).norm())
                .sum();
            if d_l < d_star {
                d_star = d_l;
                l_star = l;
            }
        }
        let j = (j_prev + l_star) % o;
        directions.push(radial(i, j)?);
        indices.push(j);
        shifts.push(l_star);
        j_prev = j;
    }
    Ok(Alignment {
        directions,
        indices,
        shifts,
    })
}

/// `ŵ_{i,j} = Rot(t_i, j·2π/m) ŵ_i` for every section.
pub fn radial_directions<T: Scalar>(
    tangents: &[Vec3<T>],
    frame_w: &[Vec3<T>],
    m: usize,
) -> Result<Vec<Vec<Vec3<T>>>> {
    if m < 3 {
        return Err(Error::validation(format!("radial count m = {m} must be at least 3")));
    }
    if tangents.len() != frame_w.len() {
        return Err(Error::validation("tangent and frame counts differ"));
    }
    let step = T::TAU() / T::of(m as f64);
    Ok(tangents
        .iter()
        .zip(frame_w)
        .map(|(&t, &w)| {
            (0..m)
                .map(|j| rotate(t, T::of(j as f64) * step, w))
                .collect()
        })
        .collect())
}

/// Cross-section centers, tangents and the aligned radial direction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselSkeleton<T> {
    pub centers: Vec<Vec3<T>>,
    pub tangents: Vec<Vec3<T>>,
    pub frame_w: Vec<Vec3<T>>,
    /// `directions[i][j]` is `ŵ_{i,j}`.
    pub directions: Vec<Vec<Vec3<T>>>,
    pub m: usize,
    pub delta_theta: T,
    /// Discrete choices made while building the frames; held fixed when
    /// differentiating through the skeleton.
    pub trace: SkeletonTrace,
}

/// Discrete state of a skeleton build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonTrace {
    pub initial: InitialDirection,
    /// How each section contour was seeded.
    pub contour_seeds: Vec<ContourSeed>,
    /// Selected contour index per section.
    pub indices: Vec<usize>,
}

impl<T: Scalar> VesselSkeleton<T> {
    /// Builds the skeleton of a centerline at its own parameters `ū_i`
    /// with `m` radial directions per section. Contours use `o = m` points.
    pub fn from_polygon(poly: &ControlPolygon<T>, m: usize) -> Result<Self> {
        let sampler = CurveSampler::new(&poly.knots, poly.params.clone())?;
        Self::from_parts(&sampler, &poly.points, m)
    }

    pub(crate) fn from_parts(
        sampler: &CurveSampler<T>,
        ctrl: &[Vec3<T>],
        m: usize,
    ) -> Result<Self> {
        if m < 3 {
            return Err(Error::validation(format!("radial count m = {m} must be at least 3")));
        }
        let centers = sampler.points(ctrl);
        let tangents = sampler
            .derivatives(ctrl)
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                d.normalized()
                    .ok_or_else(|| Error::degenerate(format!("zero tangent at section {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let chord = ctrl[ctrl.len() - 1] - ctrl[0];
        let (w0, initial) =
            initial_direction_from(tangents[0], chord, DegeneratePolicy::AxisFallback)?;
        let (seeds, contour_seeds) = contour_seeds(&tangents, w0);
        let contours: Vec<Vec<Vec3<T>>> = centers
            .iter()
            .zip(&tangents)
            .zip(&seeds)
            .map(|((&q, &t), &a)| unit_contour_from(q, t, a, m))
            .collect();
        let aligned = align_radial_frames(&contours, &centers, w0)?;
        let directions = radial_directions(&tangents, &aligned.directions, m)?;
        Ok(VesselSkeleton {
            centers,
            tangents,
            frame_w: aligned.directions,
            directions,
            m,
            delta_theta: T::TAU() / T::of(m as f64),
            trace: SkeletonTrace {
                initial,
                contour_seeds,
                indices: aligned.indices,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.centers.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::curve::fit_curve;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn quarter_turns_golden() {
        let dirs = radial_directions(&[v(0.0, 0.0, 1.0)], &[v(1.0, 0.0, 0.0)], 4).unwrap();
        let expect = [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(-1.0, 0.0, 0.0), v(0.0, -1.0, 0.0)];
        for (d, e) in dirs[0].iter().zip(expect) {
            assert!((*d - e).norm() < 1e-15);
        }
    }

    #[test]
    fn m_below_three_rejected() {
        assert!(radial_directions(&[v(0.0, 0.0, 1.0)], &[v(1.0, 0.0, 0.0)], 2).is_err());
    }

    #[test]
    fn initial_direction_right_hand_rule() {
        let (w, kind) =
            initial_direction_from(v(0.0, 0.0, 1.0), v(1.0, 0.0, 0.0), DegeneratePolicy::Error)
                .unwrap();
        assert_eq!(kind, InitialDirection::Chord);
        assert!((w - v(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn parallel_chord_is_error_or_fallback() {
        let t = v(0.0, 0.0, 1.0);
        let chord = v(0.0, 0.0, 5.0);
        assert!(matches!(
            initial_direction_from(t, chord, DegeneratePolicy::Error),
            Err(Error::Degenerate(_))
        ));
        let (w, kind) = initial_direction_from(t, chord, DegeneratePolicy::AxisFallback).unwrap();
        assert_eq!(kind, InitialDirection::Axis(0));
        assert!(w.dot(t).abs() < 1e-15);
        assert!((w.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn contour_is_clockwise_about_tangent() {
        let t = v(0.0, 0.0, 1.0);
        let c = unit_contour(Vec3::zero(), t, 8);
        for j in 0..8 {
            let a = c[j];
            let b = c[(j + 1) % 8];
            // clockwise about +t: (a × b)·t < 0
            assert!(a.cross(b).dot(t) < 0.0);
            assert!((a.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_translated_contours_zero_shift() {
        let t = v(0.3, -0.2, 1.0).normalized().unwrap();
        let centers: Vec<_> = (0..5).map(|i| t * (i as f64 * 2.0)).collect();
        let contours: Vec<_> = centers.iter().map(|&q| unit_contour(q, t, 12)).collect();
        let w0 = contours[0][3] - centers[0];
        let a = align_radial_frames(&contours, &centers, w0).unwrap();
        assert!(a.shifts.iter().all(|&l| l == 0));
        assert!(a.indices.iter().all(|&j| j == 3));
    }

    #[test]
    fn mismatched_contours_rejected() {
        let c = vec![vec![v(1.0, 0.0, 0.0); 4], vec![v(1.0, 0.0, 0.0); 5]];
        let q = vec![Vec3::zero(); 2];
        assert!(matches!(
            align_radial_frames(&c, &q, v(1.0, 0.0, 0.0)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn skeleton_invariants_on_helix() {
        let s: Vec<_> = (0..12)
            .map(|k| {
                let a = k as f64 * 0.35;
                v(10.0 * a.cos(), 10.0 * a.sin(), 2.0 * a)
            })
            .collect();
        let poly = fit_curve(&s, 3).unwrap();
        let skel = VesselSkeleton::from_polygon(&poly, 16).unwrap();
        let c = (2.0 * std::f64::consts::PI / 16.0).cos();
        for i in 0..skel.n() {
            let t = skel.tangents[i];
            assert!((t.norm() - 1.0).abs() < 1e-10);
            for j in 0..16 {
                let w = skel.directions[i][j];
                assert!((w.norm() - 1.0).abs() < 1e-10);
                assert!(w.dot(t).abs() < 1e-10);
                let wn = skel.directions[i][(j + 1) % 16];
                assert!((w.dot(wn) - c).abs() < 1e-10);
            }
        }
        assert!((skel.centers[0] - s[0]).norm() < 1e-12);
    }
}
