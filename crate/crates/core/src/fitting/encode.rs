//! Radial-profile encoding: minimise the Chamfer distance between the
//! decoded surface and a target cloud over the radii, centerline fixed.

use serde::{Deserialize, Serialize};

use super::chamfer::{chamfer, chamfer_grad_from};
use crate::error::{Error, Result};
use crate::geometry::vessel::SurfaceMap;
use crate::geometry::{ControlPolygon, RadialProfile, Vec3, VesselSkeleton};
use crate::scalar::Scalar;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
/// Radii are projected to at least this fraction of the initial radius.
const RADIUS_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// First trial step of the line search.
    pub step_size: f64,
    /// Stop once the relative objective decrease of an accepted step falls
    /// below this value.
    pub tolerance: f64,
    /// Constant starting radius; `None` uses the mean distance from the
    /// target to the centerline.
    pub init_radius: Option<f64>,
    /// Surface lattice `(res_u, res_v)` compared against the target.
    pub surface_samples: (usize, usize),
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 400,
            step_size: 1.0,
            tolerance: 1e-7,
            init_radius: None,
            surface_samples: (64, 32),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::validation("step_size and tolerance must be positive"));
        }
        if matches!(self.init_radius, Some(r) if !(r > 0.0)) {
            return Err(Error::validation("init_radius must be positive"));
        }
        if self.surface_samples.0 < 2 || self.surface_samples.1 < 2 {
            return Err(Error::validation("surface_samples must be at least 2×2"));
        }
        Ok(())
    }
}

/// `{iterations, final_value, converged}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub final_value: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub profile: RadialProfile<T>,
    pub report: FitReport,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<T>,
}

/// Mean distance from target points to a dense sampling of the centerline.
pub fn mean_distance_to_curve<T: Scalar>(poly: &ControlPolygon<T>, target: &[Vec3<T>]) -> Result<T> {
    let curve = poly.sample(200)?;
    let sum: T = target
        .iter()
        .map(|&p| {
            curve
                .iter()
                .map(|&c| c.dist_squared(p))
                .fold(T::infinity(), T::min)
                .sqrt()
        })
        .sum();
    Ok(sum / T::of(target.len() as f64))
}

/// Gradient descent with Barzilai–Borwein trial steps and halving Armijo
/// backtracking; radii are projected onto a positive floor after each step.
pub fn fit_radial_profile<T: Scalar>(
    poly: &ControlPolygon<T>,
    m: usize,
    target: &[Vec3<T>],
    cfg: &FitConfig,
) -> Result<FitOutcome<T>> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::validation("target point cloud is empty"));
    }
    let n = poly.len();
    let map = SurfaceMap::new(n, m, cfg.surface_samples.0, cfg.surface_samples.1)?;
    let skel: VesselSkeleton<T> = map.skeleton(&poly.points)?;
    let r0 = match cfg.init_radius {
        Some(r) => T::of(r),
        None => mean_distance_to_curve(poly, target)?,
    };
    if !(r0 > T::zero()) {
        return Err(Error::degenerate("target lies on the centerline"));
    }
    let floor = r0 * T::of(RADIUS_FLOOR);

    let objective = |r: &[T]| -> Result<(T, Vec<T>)> {
        let pts = map.points_unchecked(&skel, r);
        let rep = chamfer(&pts, target)?;
        let g = chamfer_grad_from(&rep, &pts, target);
        Ok((rep.value, map.radii_pullback(&skel, &g)))
    };

    let mut x = vec![r0; n * m];
    let (mut f, mut g) = objective(&x)?;
    let mut history = vec![f];
    let mut alpha = T::of(cfg.step_size);
    let mut iterations = 0;
    let mut converged = false;
    let tol = T::of(cfg.tolerance);
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut accepted = None;
        let mut trial = alpha;
        for _ in 0..60 {
            let xn: Vec<T> = x
                .iter()
                .zip(&g)
                .map(|(&xi, &gi)| (xi - trial * gi).max(floor))
                .collect();
            let decrease: T = g.iter().zip(x.iter().zip(&xn)).map(|(&gi, (&a, &b))| gi * (a - b)).sum();
            let (fnew, gnew) = objective(&xn)?;
            if fnew <= f - T::of(ARMIJO_C) * decrease {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            trial = trial * T::of(0.5);
        }
        let Some((xn, fnew, gnew)) = accepted else {
            // no descent along the projected gradient: stationary
            converged = true;
            break;
        };
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gnew.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy: T = s.iter().zip(&y).map(|(&a, &b)| a * b).sum();
        let ss: T = s.iter().map(|&a| a * a).sum();
        alpha = if sy > T::zero() { ss / sy } else { trial * T::of(2.0) };
        let rel = (f - fnew) / f.max(T::min_positive_value());
        x = xn;
        f = fnew;
        g = gnew;
        history.push(f);
        if rel < tol || f == T::zero() {
            converged = true;
            break;
        }
    }
    if !converged && cfg.max_iters > 0 {
        log::warn!("radial profile fit stopped after {iterations} iterations without converging");
    }
    Ok(FitOutcome {
        profile: RadialProfile::new(n, m, x)?,
        report: FitReport {
            iterations,
            final_value: f.to_f64_lossy(),
            converged,
        },
        history,
    })
}
