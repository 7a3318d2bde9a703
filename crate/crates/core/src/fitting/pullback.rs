//! Reverse accumulation through the decoder `B(C, R)`.
//!
//! Chain: control points → section centers and derivatives → unit tangents
//! → reference directions (chord cross product at the first section, the
//! selected contour point elsewhere) → rotated direction grid → control
//! net → surface lattice. Discrete choices recorded in the skeleton trace
//! (contour seed axes, aligned contour indices) are held constant.

use crate::error::{Error, Result};
use crate::geometry::frames::{contour_seeds, ContourSeed, InitialDirection};
use crate::geometry::vessel::{SurfaceEval, SurfaceMap};
use crate::geometry::{RadialProfile, Vec3};
use crate::scalar::Scalar;

/// Gradient of a scalar loss with respect to both latents.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGradient<T> {
    pub control_points: Vec<Vec3<T>>,
    /// Row-major n×m.
    pub radii: Vec<T>,
}

/// Cotangents `(v̄, t̄)` of `Rot(t, θ) v` given the output cotangent `g`.
#[inline]
fn rotate_backward<T: Scalar>(axis: Vec3<T>, angle: T, v: Vec3<T>, g: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let (s, c) = angle.sin_cos();
    let omc = T::one() - c;
    let vbar = g * c + g.cross(axis) * s + axis * (axis.dot(g) * omc);
    let tbar = v.cross(g) * s + (g * axis.dot(v) + v * axis.dot(g)) * omc;
    (vbar, tbar)
}

/// Cotangent of `x` for `y = x / |x|`.
#[inline]
fn normalize_backward<T: Scalar>(x: Vec3<T>, ybar: Vec3<T>) -> Vec3<T> {
    let len = x.norm();
    let y = x * (T::one() / len);
    (ybar - y * y.dot(ybar)) * (T::one() / len)
}

/// Gradients of `L` with respect to `(C, R)` given `∂L/∂P` at every lattice
/// point of `eval`.
pub fn pullback<T: Scalar>(
    map: &SurfaceMap<T>,
    ctrl: &[Vec3<T>],
    radii: &RadialProfile<T>,
    eval: &SurfaceEval<T>,
    cotangent: &[Vec3<T>],
) -> Result<LatentGradient<T>> {
    let n = map.n;
    let m = map.m;
    if cotangent.len() != eval.points.len() {
        return Err(Error::validation("cotangent length differs from lattice size"));
    }
    let skel = &eval.skeleton;
    let sbar = map.lattice.pullback(&eval.grid, cotangent);

    let mut grad_r = vec![T::zero(); n * m];
    let mut qbar = vec![Vec3::zero(); n];
    let mut tbar = vec![Vec3::zero(); n];
    let mut wbar = vec![Vec3::zero(); n];
    let step = skel.delta_theta;
    for i in 0..n {
        let t = skel.tangents[i];
        let w = skel.frame_w[i];
        for j in 0..m {
            let g = sbar[i * m + j];
            grad_r[i * m + j] = skel.directions[i][j].dot(g);
            qbar[i] += g;
            let (vb, tb) = rotate_backward(t, T::of(j as f64) * step, w, g * radii.get(i, j));
            wbar[i] += vb;
            tbar[i] += tb;
        }
    }

    let mut grad_c = vec![Vec3::zero(); n];
    // ŵ_i = Rot(t_i, −j_i·δθ) a_i with contour seeds a_i carried from the
    // previous section, so adjoints flow back along the seed chain
    let (seeds, _) = contour_seeds(&skel.tangents, skel.frame_w[0]);
    let mut abar = vec![Vec3::zero(); n];
    for i in (1..n).rev() {
        let t = skel.tangents[i];
        let angle = -(T::of(skel.trace.indices[i] as f64) * step);
        let (ab, tb) = rotate_backward(t, angle, seeds[i], wbar[i]);
        abar[i] += ab;
        tbar[i] += tb;
        match skel.trace.contour_seeds[i] {
            ContourSeed::Transported => {
                let prev = seeds[i - 1];
                let x = prev - t * t.dot(prev);
                let xbar = normalize_backward(x, abar[i]);
                abar[i - 1] += xbar - t * t.dot(xbar);
                tbar[i] += -(xbar * t.dot(prev) + prev * t.dot(xbar));
            }
            ContourSeed::Axis(k) => {
                let axis = Vec3::axis(k);
                let xbar = normalize_backward(t.cross(axis), abar[i]);
                tbar[i] += axis.cross(xbar);
            }
            ContourSeed::Initial => {
                return Err(Error::validation(format!("section {i} marked as the initial contour")));
            }
        }
    }
    // ŵ_0 is both the first frame and the first seed
    let w0bar = wbar[0] + abar[0];
    let t = skel.tangents[0];
    let other = match skel.trace.initial {
        InitialDirection::Chord => ctrl[n - 1] - ctrl[0],
        InitialDirection::Axis(k) => Vec3::axis(k),
    };
    let xbar = normalize_backward(t.cross(other), w0bar);
    tbar[0] += other.cross(xbar);
    if skel.trace.initial == InitialDirection::Chord {
        let cb = xbar.cross(t);
        grad_c[n - 1] += cb;
        grad_c[0] -= cb;
    }

    // tangents are normalized section derivatives
    let ders = map.sections.derivatives(ctrl);
    let dbar: Vec<Vec3<T>> = ders
        .iter()
        .zip(&tbar)
        .map(|(&d, &tb)| normalize_backward(d, tb))
        .collect();
    map.sections.pullback_points(&qbar, &mut grad_c);
    map.sections.pullback_derivatives(&dbar, &mut grad_c);
    Ok(LatentGradient {
        control_points: grad_c,
        radii: grad_r,
    })
}

/// Chamfer objective against a target cloud with its latent gradient.
pub fn chamfer_objective<T: Scalar>(
    map: &SurfaceMap<T>,
    ctrl: &[Vec3<T>],
    radii: &RadialProfile<T>,
    target: &[Vec3<T>],
) -> Result<(T, LatentGradient<T>)> {
    let ev = map.forward(ctrl, radii)?;
    let (rep, g) = super::chamfer::chamfer_grad(&ev.points, target)?;
    let grad = pullback(map, ctrl, radii, &ev, &g)?;
    Ok((rep.value, grad))
}
