//! A seeded parametric family of aorta-like vessels with supra-aortic
//! branches, generated together with their ground-truth latents.
//!
//! Units are centimetres with `z` pointing up. The aorta runs from the
//! valve (the lowest point) up the ascending leg, over a half-elliptic
//! arch and down a shorter descending leg. Radii taper along the vessel,
//! are slightly elliptic, and 40% of members carry a Gaussian bulge on
//! the ascending side.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::branch::BranchId;
use super::branching::{BranchTopology, TOPOLOGY_ORDER};
use super::encode::{cumulative_length, encode_centerline};
use super::record::VesselRecord;
use super::Cohort;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::{Point, RadialProfile, VesselLatent};

pub const DEFAULT_COHORT_SIZE: usize = 30;
pub const MIN_COHORT_SIZE: usize = 5;
/// Points in the stored dense centerline polylines.
pub const POLYLINE_POINTS: usize = 200;

/// Mean split locations in [`TOPOLOGY_ORDER`].
const SPLIT_MEANS: [f64; 4] = [0.30, 0.46, 0.38, 0.30];
const SPLIT_SHARED_SD: f64 = 0.02;
const SPLIT_OWN_SD: f64 = 0.02;

/// Cross-section radius as a function of the normalized position `t` and
/// angle `theta`.
#[derive(Debug, Clone, Copy)]
struct RadiusModel {
    r0: f64,
    r1: f64,
    ellipticity: f64,
    bulge: f64,
    bulge_at: f64,
    bulge_width: f64,
}

impl RadiusModel {
    fn eval(&self, t: f64, theta: f64) -> f64 {
        let base = (self.r0 + (self.r1 - self.r0) * t) * (1.0 + self.ellipticity * (2.0 * theta).cos());
        let z = (t - self.bulge_at) / self.bulge_width;
        base + self.bulge * (-0.5 * z * z).exp()
    }

    fn profile(&self, n: usize, m: usize) -> Result<RadialProfile> {
        let r = (0..n * m)
            .map(|k| {
                let t = (k / m) as f64 / (n - 1) as f64;
                let theta = 2.0 * PI * (k % m) as f64 / m as f64;
                self.eval(t, theta)
            })
            .collect();
        RadialProfile::new(n, m, r)
    }
}

fn dense_aorta(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let ascending: f64 = rng.random_range(3.0..4.5);
    let half_width: f64 = rng.random_range(2.5..3.2);
    let height: f64 = rng.random_range(2.5..3.5);
    let descending: f64 = rng.random_range(1.5..2.8);
    let bow = rng.random_range(-0.8..0.8);
    let k = POLYLINE_POINTS;
    // lengths of the three pieces decide how many samples each receives
    let arch_len = PI * (0.5 * (half_width * half_width + height * height)).sqrt();
    let total = ascending + arch_len + descending;
    let n_asc = ((ascending / total) * k as f64).round().max(4.0) as usize;
    let n_desc = ((descending / total) * k as f64).round().max(4.0) as usize;
    let n_arch = k - n_asc - n_desc;
    let mut pts = Vec::with_capacity(k);
    for i in 0..n_asc {
        pts.push(Vec3::new(0.0, 0.0, ascending * i as f64 / n_asc as f64));
    }
    for i in 0..n_arch {
        let phi = PI * i as f64 / (n_arch - 1) as f64;
        pts.push(Vec3::new(half_width * (1.0 - phi.cos()), 0.0, ascending + height * phi.sin()));
    }
    for i in 1..=n_desc {
        pts.push(Vec3::new(2.0 * half_width, 0.0, ascending - descending * i as f64 / n_desc as f64));
    }
    let cum = cumulative_length(&pts);
    let len = cum[cum.len() - 1];
    for (p, s) in pts.iter_mut().zip(&cum) {
        p.y = bow * (PI * s / len).sin();
    }
    pts
}

fn dense_branch(rng: &mut ChaCha8Rng, length: (f64, f64)) -> Vec<Point> {
    let len = rng.random_range(length.0..length.1);
    let bx = rng.random_range(-0.5..0.5);
    let by = rng.random_range(-0.5..0.5);
    (0..POLYLINE_POINTS)
        .map(|i| {
            let s = i as f64 / (POLYLINE_POINTS - 1) as f64;
            Vec3::new(bx * s * s, by * s * s, len * s)
        })
        .collect()
}

fn aorta_radii(rng: &mut ChaCha8Rng) -> RadiusModel {
    let bulged = rng.random_bool(0.4);
    RadiusModel {
        r0: rng.random_range(1.2..1.5),
        r1: rng.random_range(0.8..1.1),
        ellipticity: rng.random_range(0.0..0.08),
        bulge: if bulged { rng.random_range(0.15..0.35) } else { 0.0 },
        bulge_at: rng.random_range(0.1..0.35),
        bulge_width: 0.06,
    }
}

fn branch_radii(rng: &mut ChaCha8Rng, r0: (f64, f64)) -> RadiusModel {
    let start = rng.random_range(r0.0..r0.1);
    RadiusModel {
        r0: start,
        r1: start * rng.random_range(0.7..0.9),
        ellipticity: rng.random_range(0.0..0.05),
        bulge: 0.0,
        bulge_at: 0.5,
        bulge_width: 0.1,
    }
}

/// Ground-truth record: `C` is the curve fit of the arc-length resampled
/// polyline (what the encoder recovers), `R` samples the radius model at
/// the section parameters, and the surface is their decoded mesh.
fn truth_record(branch: BranchId, dense: Vec<Point>, radius: RadiusModel) -> Result<VesselRecord> {
    let p = branch.preset();
    let poly = encode_centerline(&dense, p.n)?;
    let latent = VesselLatent {
        control_points: poly.points,
        radii: radius.profile(p.n, p.m)?,
    };
    let mesh = latent.mesh(p.mesh_u, p.mesh_v)?;
    let mut rec = VesselRecord {
        branch,
        centerline: dense,
        surface: mesh.vertices,
        faces: mesh.quads.iter().map(|q| q.to_vec()).collect(),
        latent: Some(latent),
        reversed: false,
    };
    rec.recenter();
    Ok(rec)
}

fn topology(rng: &mut ChaCha8Rng) -> BranchTopology {
    let shared: f64 = StandardNormal.sample(rng);
    let mut e = [0.0; 4];
    for (k, v) in e.iter_mut().enumerate() {
        let own: f64 = StandardNormal.sample(rng);
        *v = SPLIT_MEANS[k] + SPLIT_SHARED_SD * shared + SPLIT_OWN_SD * own;
    }
    BranchTopology { e }
}

/// `count` members, each with all five branches and one topology sample.
pub fn make_synthetic_cohort(seed: u64, count: usize) -> Result<Cohort> {
    if count < MIN_COHORT_SIZE {
        return Err(Error::validation(format!(
            "a cohort needs at least {MIN_COHORT_SIZE} members, got {count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cohort = Cohort::empty(seed);
    for _ in 0..count {
        let aorta = dense_aorta(&mut rng);
        let r = aorta_radii(&mut rng);
        cohort.push(truth_record(BranchId::Aorta, aorta, r)?);
        for b in [BranchId::Lsa, BranchId::Lcca, BranchId::Rsa, BranchId::Rcca] {
            let (length, r0) = match b {
                BranchId::Rcca => ((2.5, 4.0), (0.5, 0.65)),
                BranchId::Rsa => ((3.0, 4.5), (0.4, 0.55)),
                _ => ((3.0, 5.0), (0.45, 0.6)),
            };
            let line = dense_branch(&mut rng, length);
            let rad = branch_radii(&mut rng, r0);
            cohort.push(truth_record(b, line, rad)?);
        }
        cohort.topologies.push(topology(&mut rng));
    }
    cohort.notes.push(format!(
        "synthetic cohort: seed {seed}, {count} members, split order {:?}",
        TOPOLOGY_ORDER.map(|b| b.name())
    ));
    Ok(cohort)
}
