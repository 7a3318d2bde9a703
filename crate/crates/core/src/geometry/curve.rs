//! Interpolating B-spline centerline curves.

use serde::{Deserialize, Serialize};

use super::knots::KnotVector;
use super::vec3::Vec3;
use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::scalar::Scalar;

/// Centerline control points with the knot vector and the sample
/// parameters they were fitted at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPolygon<T> {
    pub points: Vec<Vec3<T>>,
    pub degree: usize,
    pub knots: KnotVector<T>,
    /// Parameters `ū_k` in `[0, 1]`, one per control point.
    pub params: Vec<T>,
}

/// Uniform parameters `ū_k = k / (n - 1)`.
pub fn uniform_params<T: Scalar>(n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::zero()];
    }
    let last = T::of((n - 1) as f64);
    let mut p: Vec<T> = (0..n).map(|k| T::of(k as f64) / last).collect();
    p[n - 1] = T::one();
    p
}

/// Interpolates `samples` with a clamped B-spline of `degree`: one control
/// point per sample, uniform parameters and averaged knots.
pub fn fit_curve<T: Scalar>(samples: &[Vec3<T>], degree: usize) -> Result<ControlPolygon<T>> {
    let n = samples.len();
    if degree == 0 || n < degree + 1 {
        return Err(Error::validation(format!(
            "curve fit needs at least {} samples for degree {degree}, got {n}",
            degree + 1
        )));
    }
    if samples.iter().any(|p| !p.is_finite()) {
        return Err(Error::validation("curve samples must be finite"));
    }
    let params = uniform_params::<T>(n);
    let knots = KnotVector::clamped_averaged(&params, degree)?;
    let mut a = vec![vec![T::zero(); n]; n];
    for (k, &u) in params.iter().enumerate() {
        let b = knots.basis_functions(u)?;
        for (j, v) in b.values.iter().enumerate() {
            a[k][b.start + j] = *v;
        }
    }
    let rhs: Vec<Vec<T>> = samples.iter().map(|p| vec![p.x, p.y, p.z]).collect();
    let sol = solve_dense(&a, &rhs)?;
    let mut points: Vec<Vec3<T>> = sol.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
    // clamped ends interpolate exactly
    points[0] = samples[0];
    points[n - 1] = samples[n - 1];
    Ok(ControlPolygon {
        points,
        degree,
        knots,
        params,
    })
}

impl<T: Scalar> ControlPolygon<T> {
    /// Control polygon with uniform parameters and averaged knots around
    /// existing control points (used when decoding generated latents).
    pub fn from_points(points: Vec<Vec3<T>>, degree: usize) -> Result<Self> {
        let n = points.len();
        if degree == 0 || n < degree + 1 {
            return Err(Error::validation(format!(
                "control polygon needs at least {} points for degree {degree}, got {n}",
                degree + 1
            )));
        }
        let params = uniform_params::<T>(n);
        let knots = KnotVector::clamped_averaged(&params, degree)?;
        Ok(ControlPolygon {
            points,
            degree,
            knots,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check_param(&self, u: T) -> Result<()> {
        if u < T::zero() || u > T::one() || u.is_nan() {
            return Err(Error::Domain(format!("{u} not in [0, 1]")));
        }
        Ok(())
    }

    /// Curve point `Σ N_{i,d}(u) c_i`.
    pub fn eval(&self, u: T) -> Result<Vec3<T>> {
        self.check_param(u)?;
        let b = self.knots.basis_functions(u)?;
        Ok(b.values
            .iter()
            .enumerate()
            .fold(Vec3::zero(), |acc, (j, &w)| acc + self.points[b.start + j] * w))
    }

    /// First derivative `dC/du`.
    pub fn derivative(&self, u: T) -> Result<Vec3<T>> {
        self.check_param(u)?;
        let b = self.knots.basis_derivatives(u, 1)?;
        Ok(b.ders[1]
            .iter()
            .enumerate()
            .fold(Vec3::zero(), |acc, (j, &w)| acc + self.points[b.start + j] * w))
    }

    /// Unit tangents at each parameter.
    pub fn tangents(&self, params: &[T]) -> Result<Vec<Vec3<T>>> {
        params
            .iter()
            .map(|&u| {
                self.derivative(u)?.normalized().ok_or_else(|| {
                    Error::degenerate(format!("zero-length curve derivative at u = {u}"))
                })
            })
            .collect()
    }

    /// Evaluates `count` points at uniform parameters.
    pub fn sample(&self, count: usize) -> Result<Vec<Vec3<T>>> {
        uniform_params::<T>(count.max(2))
            .into_iter()
            .map(|u| self.eval(u))
            .collect()
    }

    /// Chord from the first to the last control point.
    pub fn chord(&self) -> Vec3<T> {
        self.points[self.points.len() - 1] - self.points[0]
    }

    pub fn flatten(&self) -> Vec<T> {
        self.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }
}

/// Dense basis weights of a curve at a fixed parameter list, so the curve
/// becomes a linear map from control points.
#[derive(Debug, Clone)]
pub struct CurveSampler<T> {
    pub params: Vec<T>,
    /// `(start, values)` per parameter.
    rows: Vec<(usize, Vec<T>)>,
    drows: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> CurveSampler<T> {
    pub fn new(knots: &KnotVector<T>, params: Vec<T>) -> Result<Self> {
        let mut rows = Vec::with_capacity(params.len());
        let mut drows = Vec::with_capacity(params.len());
        for &u in &params {
            let d = knots.basis_derivatives(u, 1)?;
            rows.push((d.start, d.ders[0].clone()));
            drows.push((d.start, d.ders[1].clone()));
        }
        Ok(CurveSampler {
            params,
            rows,
            drows,
        })
    }

    pub fn points(&self, ctrl: &[Vec3<T>]) -> Vec<Vec3<T>> {
        Self::apply(&self.rows, ctrl)
    }

    pub fn derivatives(&self, ctrl: &[Vec3<T>]) -> Vec<Vec3<T>> {
        Self::apply(&self.drows, ctrl)
    }

    fn apply(rows: &[(usize, Vec<T>)], ctrl: &[Vec3<T>]) -> Vec<Vec3<T>> {
        rows.iter()
            .map(|(s, w)| {
                w.iter()
                    .enumerate()
                    .fold(Vec3::zero(), |acc, (j, &v)| acc + ctrl[s + j] * v)
            })
            .collect()
    }

    /// Accumulates `Σ_k w_{k,i} g_k` into `out[i]` (transpose of `points`).
    pub fn pullback_points(&self, grads: &[Vec3<T>], out: &mut [Vec3<T>]) {
        Self::transpose(&self.rows, grads, out)
    }

    pub fn pullback_derivatives(&self, grads: &[Vec3<T>], out: &mut [Vec3<T>]) {
        Self::transpose(&self.drows, grads, out)
    }

    fn transpose(rows: &[(usize, Vec<T>)], grads: &[Vec3<T>], out: &mut [Vec3<T>]) {
        for ((s, w), g) in rows.iter().zip(grads) {
            for (j, &v) in w.iter().enumerate() {
                out[s + j] += *g * v;
            }
        }
    }
}
