//! Pipeline configuration: one JSON document covering schedule, training,
//! sampling, encoding and branch resolutions.
//!
//! Missing keys fall back to the built-in defaults, so a file only needs
//! the values it changes. Front ends layer their own flags on top.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{BranchId, BranchPreset};
use crate::diffusion::{HierarchicalConfig, SamplerConfig, ScheduleSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::fitting::FitConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schedule: ScheduleSpec,
    pub centerline_train: TrainConfig,
    pub radii_train: TrainConfig,
    pub sampler: SamplerConfig,
    pub hierarchical: HierarchicalConfig,
    pub fit: FitConfig,
    pub presets: BTreeMap<BranchId, BranchPreset>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schedule: ScheduleSpec::default(),
            centerline_train: TrainConfig::default(),
            radii_train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
            hierarchical: HierarchicalConfig::default(),
            fit: FitConfig::default(),
            presets: BranchId::ALL.iter().map(|&b| (b, b.preset())).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::from_json(&std::fs::read_to_string(p)?),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn preset(&self, branch: BranchId) -> Result<BranchPreset> {
        self.presets
            .get(&branch)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("no preset for branch {branch}")))
    }

    pub fn validate(&self) -> Result<()> {
        crate::diffusion::NoiseSchedule::try_from(self.schedule)?;
        self.centerline_train.validate()?;
        self.radii_train.validate()?;
        self.sampler.validate()?;
        for (b, p) in &self.presets {
            if p.n < 4 || p.m < 3 || p.mesh_u < 2 || p.mesh_v < 3 {
                return Err(Error::validation(format!("preset for {b} is too coarse: {p:?}")));
            }
        }
        Ok(())
    }
}
