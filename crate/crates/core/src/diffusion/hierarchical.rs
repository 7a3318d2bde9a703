//! Two-stage generation: centerlines first, then radii per centerline.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::observe::{flatten, unflatten, CenterlineObservation, SurfaceObservation, DEFAULT_CURVE_SAMPLES};
use super::sampler::{sample, Guidance, Observation, SamplerConfig};
use super::train::DiffusionModel;
use crate::error::{Error, Result};
use crate::geometry::vessel::SurfaceMap;
use crate::geometry::{centroid, RadialProfile, Vec3, VesselLatent, VesselSkeleton};
use crate::scalar::Scalar;

/// Offset applied to the seed of the radii stage.
const STAGE_TWO_SEED: u64 = 0x9E37_79B9_7F4A_7C15;
/// Sampled radii are floored at this fraction of the largest training radius.
const RADIUS_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalModel<T> {
    pub n: usize,
    pub m: usize,
    pub centerline: DiffusionModel<T>,
    pub radii: DiffusionModel<T>,
}

impl<T: Scalar> HierarchicalModel<T> {
    pub fn new(centerline: DiffusionModel<T>, radii: DiffusionModel<T>, m: usize) -> Result<Self> {
        let cd = centerline.dim();
        if cd % 3 != 0 || m == 0 || radii.dim() != (cd / 3) * m {
            return Err(Error::validation(format!(
                "centerline width {cd} and radii width {} do not fit n×3 / n×{m}",
                radii.dim()
            )));
        }
        Ok(HierarchicalModel {
            n: cd / 3,
            m,
            centerline,
            radii,
        })
    }
}

/// User prompts: centerline points, contour loops and surface patches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptBundle<T> {
    pub points: Vec<Vec3<T>>,
    pub contours: Vec<Vec<Vec3<T>>>,
    pub patches: Vec<Vec<Vec3<T>>>,
}

impl<T: Scalar> PromptBundle<T> {
    pub fn validate(&self) -> Result<()> {
        if self.contours.iter().any(|c| c.len() < 3) {
            return Err(Error::validation("contour prompts need at least 3 points"));
        }
        if self.patches.iter().any(|p| p.is_empty()) {
            return Err(Error::validation("empty surface patch prompt"));
        }
        let finite = |p: &Vec3<T>| p.is_finite();
        let all = self.points.iter().chain(self.contours.iter().flatten()).chain(self.patches.iter().flatten());
        if !all.clone().all(finite) {
            return Err(Error::validation("non-finite prompt coordinate"));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.contours.is_empty() && self.patches.is_empty()
    }

    /// Point prompts plus the centroid of every contour.
    pub fn centerline_prompts(&self) -> Vec<Vec3<T>> {
        let mut out = self.points.clone();
        out.extend(self.contours.iter().filter_map(|c| centroid(c)));
        out
    }

    /// Raw contour and patch points.
    pub fn surface_prompts(&self) -> Vec<Vec3<T>> {
        self.contours.iter().chain(&self.patches).flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchicalConfig {
    /// Centerlines drawn in stage one (K).
    pub centerlines: usize,
    /// Radial profiles drawn per centerline in stage two (L).
    pub radii_per_centerline: usize,
    pub gamma: f64,
    pub seed: u64,
    pub dps_sigma: f64,
    pub dps_scale: f64,
    pub guidance: Guidance,
    pub curve_samples: usize,
    /// Surface lattice used by the contour likelihood.
    pub surface_samples: (usize, usize),
}

impl Default for HierarchicalConfig {
    fn default() -> Self {
        HierarchicalConfig {
            centerlines: 10,
            radii_per_centerline: 5,
            gamma: 1.0,
            seed: 0,
            dps_sigma: 1.0,
            dps_scale: 1.0,
            guidance: Guidance::ResidualNormalized,
            curve_samples: DEFAULT_CURVE_SAMPLES,
            surface_samples: (48, 24),
        }
    }
}

impl HierarchicalConfig {
    fn sampler(&self, batch: usize, seed: u64) -> SamplerConfig {
        SamplerConfig {
            gamma: self.gamma,
            batch,
            seed,
            dps_sigma: self.dps_sigma,
            dps_scale: self.dps_scale,
            guidance: self.guidance,
        }
    }
}

fn rows<T: Scalar>(x: &Array2<T>) -> Vec<Vec<T>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Stage one: `cfg.batch` centerlines, guided by point prompts when given.
pub fn sample_centerlines<T: Scalar>(
    model: &DiffusionModel<T>,
    prompts: &[Vec3<T>],
    cfg: &SamplerConfig,
    curve_samples: usize,
) -> Result<Vec<Vec<Vec3<T>>>> {
    if model.dim() % 3 != 0 {
        return Err(Error::validation("centerline model width is not a multiple of 3"));
    }
    let n = model.dim() / 3;
    let obs = CenterlineObservation::new(n, &model.norm, prompts.to_vec(), curve_samples)?;
    let x = sample(&model.net, &model.schedule, None, cfg, Some(&obs as &dyn Observation<T>))?;
    let raw = model.norm.denormalize(x.view());
    Ok(rows(&raw).iter().map(|r| unflatten(r)).collect())
}

/// Stage two: one radial profile per given centerline. The centerlines
/// condition the network (with CFG weight `cfg.gamma`) and fix the
/// skeletons used by the surface likelihood.
pub fn sample_radii<T: Scalar>(
    model: &DiffusionModel<T>,
    centerlines: &[Vec<Vec3<T>>],
    m: usize,
    prompts: &[Vec3<T>],
    cfg: &SamplerConfig,
    surface_samples: (usize, usize),
) -> Result<Vec<RadialProfile<T>>> {
    let b = centerlines.len();
    if b == 0 {
        return Ok(Vec::new());
    }
    let n = centerlines[0].len();
    if model.dim() != n * m {
        return Err(Error::validation(format!(
            "radii model width {} differs from n×m = {}",
            model.dim(),
            n * m
        )));
    }
    let map = SurfaceMap::new(n, m, surface_samples.0, surface_samples.1)?;
    let skeletons: Vec<VesselSkeleton<T>> = centerlines.iter().map(|c| map.skeleton(c)).collect::<Result<_>>()?;
    let cond = if model.conditional() {
        let flat: Vec<T> = centerlines.iter().flat_map(|c| flatten(c)).collect();
        let raw = Array2::from_shape_vec((b, 3 * n), flat).map_err(|e| Error::validation(e.to_string()))?;
        Some(model.condition_rows(raw.view())?)
    } else {
        None
    };
    let obs = SurfaceObservation {
        prompts: prompts.to_vec(),
        norm: &model.norm,
        map: &map,
        skeletons: skeletons.iter().collect(),
    };
    let mut scfg = cfg.clone();
    scfg.batch = b;
    let x = sample(
        &model.net,
        &model.schedule,
        cond.as_ref().map(|c| c.view()),
        &scfg,
        Some(&obs as &dyn Observation<T>),
    )?;
    let raw = model.norm.denormalize(x.view());
    let top = model.norm.max.iter().copied().fold(T::zero(), T::max);
    let floor = top * T::of(RADIUS_FLOOR);
    rows(&raw)
        .into_iter()
        .map(|r| RadialProfile::new(n, m, r.into_iter().map(|v| v.max(floor)).collect()))
        .collect()
}

/// K centerlines × L radial profiles, ordered centerline-major.
pub fn sample_hierarchical<T: Scalar>(
    model: &HierarchicalModel<T>,
    prompts: &PromptBundle<T>,
    cfg: &HierarchicalConfig,
) -> Result<Vec<VesselLatent<T>>> {
    prompts.validate()?;
    if cfg.centerlines == 0 || cfg.radii_per_centerline == 0 {
        return Err(Error::validation("K and L must be at least 1"));
    }
    let cls = sample_centerlines(
        &model.centerline,
        &prompts.centerline_prompts(),
        &cfg.sampler(cfg.centerlines, cfg.seed),
        cfg.curve_samples,
    )?;
    let l = cfg.radii_per_centerline;
    let expanded: Vec<Vec<Vec3<T>>> = cls.iter().flat_map(|c| std::iter::repeat_n(c.clone(), l)).collect();
    let radii = sample_radii(
        &model.radii,
        &expanded,
        model.m,
        &prompts.surface_prompts(),
        &cfg.sampler(expanded.len(), cfg.seed.wrapping_add(STAGE_TWO_SEED)),
        cfg.surface_samples,
    )?;
    Ok(expanded
        .into_iter()
        .zip(radii)
        .map(|(control_points, radii)| VesselLatent { control_points, radii })
        .collect())
}

/// Per-stage epoch losses from [`train_hierarchical`].
#[derive(Debug, Clone)]
pub struct HierarchicalLogs {
    pub centerline: Vec<super::train::EpochLoss>,
    pub radii: Vec<super::train::EpochLoss>,
}

/// Trains the centerline prior on flattened control points and the radii
/// prior on flattened radii conditioned on those control points.
pub fn train_hierarchical<T: Scalar>(
    latents: &[VesselLatent<T>],
    schedule: &super::schedule::NoiseSchedule,
    centerline_cfg: &super::train::TrainConfig,
    radii_cfg: &super::train::TrainConfig,
) -> Result<(HierarchicalModel<T>, HierarchicalLogs)> {
    let first = latents.first().ok_or_else(|| Error::validation("no training latents"))?;
    let (n, m) = (first.n(), first.m());
    if latents.iter().any(|l| l.n() != n || l.m() != m) {
        return Err(Error::validation("training latents differ in (n, m)"));
    }
    let k = latents.len();
    let cl: Vec<T> = latents.iter().flat_map(|l| l.flatten_centerline()).collect();
    let rad: Vec<T> = latents.iter().flat_map(|l| l.radii.radii.iter().copied()).collect();
    let cl = Array2::from_shape_vec((k, 3 * n), cl).map_err(|e| Error::validation(e.to_string()))?;
    let rad = Array2::from_shape_vec((k, n * m), rad).map_err(|e| Error::validation(e.to_string()))?;
    let c = super::train::train(cl.view(), None, schedule.clone(), centerline_cfg)?;
    let r = super::train::train(rad.view(), Some(cl.view()), schedule.clone(), radii_cfg)?;
    Ok((
        HierarchicalModel::new(c.model, r.model, m)?,
        HierarchicalLogs {
            centerline: c.log,
            radii: r.log,
        },
    ))
}
