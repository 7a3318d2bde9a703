//! Vessel cohorts: ingestion, encoding, the synthetic family, branching
//! statistics, biomarkers and distribution reports.

pub mod biomarkers;
pub mod branch;
pub mod branching;
pub mod encode;
pub mod record;
pub mod stats;
pub mod synthetic;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use biomarkers::{
    biomarkers, biomarkers_from_mesh, biomarkers_from_tube, read_biomarker_csv, write_biomarker_csv, BiomarkerTable,
    BIOMARKER_NAMES,
};
pub use branch::{BranchId, BranchPreset};
pub use branching::{
    assemble, clamp_topology, fit_branching, sample_branching, BranchGeometry, BranchTopology, JunctionReport, Scene,
    SPLIT_CLAMP, TOPOLOGY_ORDER,
};
pub use encode::{encode_centerline, encode_vessel, resample_polyline, EncodedVessel};
pub use record::{ingest, ingest_files, ingest_record, parse_polyline, write_polyline, Orientation, VesselRecord};
pub use stats::{compare_distributions, ks_statistic, DistributionReport, MarkerComparison};
pub use synthetic::{make_synthetic_cohort, DEFAULT_COHORT_SIZE, MIN_COHORT_SIZE};

use crate::error::{Error, Result};
use crate::geometry::io::LatentFile;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Records grouped by branch plus one topology sample per member.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub seed: u64,
    pub records: BTreeMap<BranchId, Vec<VesselRecord>>,
    pub topologies: Vec<BranchTopology>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub branch: BranchId,
    pub index: usize,
    pub centerline: String,
    pub surface: String,
    pub latent: Option<String>,
    pub reversed: bool,
}

/// On-disk description of a cohort directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub seed: u64,
    pub presets: BTreeMap<BranchId, BranchPreset>,
    pub records: Vec<ManifestEntry>,
    pub topologies: Vec<BranchTopology>,
    pub notes: Vec<String>,
}

impl Cohort {
    pub fn empty(seed: u64) -> Self {
        Cohort {
            seed,
            records: BTreeMap::new(),
            topologies: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Adds a record after checking it against the branch preset.
    pub fn push(&mut self, rec: VesselRecord) {
        self.records.entry(rec.branch).or_default().push(rec);
    }

    pub fn branch(&self, b: BranchId) -> &[VesselRecord] {
        self.records.get(&b).map_or(&[], |v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every latent must match its branch preset.
    pub fn validate(&self) -> Result<()> {
        for (b, recs) in &self.records {
            let p = b.preset();
            for r in recs {
                r.validate()?;
                if let Some(l) = &r.latent {
                    if l.n() != p.n || l.m() != p.m {
                        return Err(Error::validation(format!(
                            "{b} latent is {}×{}, preset is {}×{}",
                            l.n(),
                            l.m(),
                            p.n,
                            p.m
                        )));
                    }
                }
            }
        }
        for t in &self.topologies {
            t.validate()?;
        }
        Ok(())
    }

    /// Latents of one branch, in record order; errors if any is missing.
    pub fn latents(&self, b: BranchId) -> Result<Vec<crate::VesselLatent>> {
        self.branch(b)
            .iter()
            .enumerate()
            .map(|(k, r)| {
                r.latent
                    .clone()
                    .ok_or_else(|| Error::validation(format!("{b} record {k} has no latent")))
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<CohortManifest> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (b, recs) in &self.records {
            for (k, r) in recs.iter().enumerate() {
                let stem = format!("{}_{k:03}", b.name());
                let centerline = format!("{stem}_centerline.csv");
                let surface = format!("{stem}_surface.obj");
                std::fs::write(dir.join(&centerline), r.centerline_text())?;
                std::fs::write(dir.join(&surface), r.surface_obj())?;
                let latent = match &r.latent {
                    Some(l) => {
                        let name = format!("{stem}_latent.json");
                        std::fs::write(dir.join(&name), serde_json::to_string(&LatentFile::from_latent(l))?)?;
                        Some(name)
                    }
                    None => None,
                };
                entries.push(ManifestEntry {
                    branch: *b,
                    index: k,
                    centerline,
                    surface,
                    latent,
                    reversed: r.reversed,
                });
            }
        }
        let manifest = CohortManifest {
            seed: self.seed,
            presets: BranchId::ALL.iter().map(|&b| (b, b.preset())).collect(),
            records: entries,
            topologies: self.topologies.clone(),
            notes: self.notes.clone(),
        };
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Reads a directory written by [`Cohort::write`]; records are
    /// re-ingested as stated.
    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: CohortManifest = serde_json::from_str(&text)?;
        for (b, p) in &manifest.presets {
            if *p != b.preset() {
                return Err(Error::validation(format!("manifest preset for {b} differs from the built-in one")));
            }
        }
        let mut cohort = Cohort::empty(manifest.seed);
        for e in &manifest.records {
            let latent = match &e.latent {
                Some(name) => {
                    let f: LatentFile = serde_json::from_str(&std::fs::read_to_string(dir.join(name))?)?;
                    Some(f.to_latent()?)
                }
                None => None,
            };
            let mut rec = ingest_record(
                &std::fs::read_to_string(dir.join(&e.centerline))?,
                &std::fs::read_to_string(dir.join(&e.surface))?,
                e.branch,
                Orientation::AsStated,
                latent,
            )?;
            rec.reversed = e.reversed;
            cohort.push(rec);
        }
        cohort.topologies = manifest.topologies;
        cohort.notes = manifest.notes;
        cohort.validate()?;
        Ok(cohort)
    }
}
