//! Full-vessel encoding: centerline resampling, curve fit, then the
//! radial-profile fit against the record surface.

use super::branch::BranchPreset;
use super::record::VesselRecord;
use crate::error::{Error, Result};
use crate::fitting::{fit_radial_profile, FitConfig, FitReport};
use crate::geometry::{fit_curve, DEFAULT_DEGREE};
use crate::{ControlPolygon, Point, VesselLatent};

/// Cumulative arc length along a polyline, starting at 0.
pub fn cumulative_length(points: &[Point]) -> Vec<f64> {
    let mut s = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for (k, p) in points.iter().enumerate() {
        if k > 0 {
            acc += (*p - points[k - 1]).norm();
        }
        s.push(acc);
    }
    s
}

/// Point at arc length `target` by linear interpolation on the polyline.
pub fn point_at_length(points: &[Point], cum: &[f64], target: f64) -> Point {
    let k = cum.partition_point(|&s| s < target).clamp(1, points.len() - 1);
    let (s0, s1) = (cum[k - 1], cum[k]);
    let t = if s1 > s0 { ((target - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
    points[k - 1] + (points[k] - points[k - 1]) * t
}

/// `count` points equally spaced in arc length, endpoints included.
pub fn resample_polyline(points: &[Point], count: usize) -> Result<Vec<Point>> {
    if points.len() < 2 || count < 2 {
        return Err(Error::validation("resampling needs at least two points in and out"));
    }
    let cum = cumulative_length(points);
    let total = cum[cum.len() - 1];
    if !(total > 0.0) {
        return Err(Error::Degenerate("centerline has zero length".into()));
    }
    Ok((0..count)
        .map(|k| point_at_length(points, &cum, total * k as f64 / (count - 1) as f64))
        .collect())
}

/// The centerline half of the encoder.
pub fn encode_centerline(centerline: &[Point], n: usize) -> Result<ControlPolygon> {
    fit_curve(&resample_polyline(centerline, n)?, DEFAULT_DEGREE)
}

#[derive(Debug, Clone)]
pub struct EncodedVessel {
    pub latent: VesselLatent,
    pub report: FitReport,
}

/// `z = E(Ψ)`: resample the centerline to `n` points, fit the control
/// polygon, then fit the `n×m` radii to the surface.
pub fn encode_vessel(record: &VesselRecord, preset: &BranchPreset, cfg: &FitConfig) -> Result<EncodedVessel> {
    record.validate()?;
    let poly = encode_centerline(&record.centerline, preset.n)?;
    let out = fit_radial_profile(&poly, preset.m, &record.surface, cfg)?;
    Ok(EncodedVessel {
        latent: VesselLatent {
            control_points: poly.points,
            radii: out.profile,
        },
        report: out.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn resample_straight_line() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 4.0)];
        let r = resample_polyline(&pts, 5).unwrap();
        for (k, p) in r.iter().enumerate() {
            assert!((p.z - k as f64).abs() < 1e-12);
        }
        assert!(resample_polyline(&[pts[0], pts[0]], 3).is_err());
    }
}
