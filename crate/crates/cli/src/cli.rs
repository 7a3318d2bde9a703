//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use vesselgen::cohort::{BranchId, DEFAULT_COHORT_SIZE};

/// Vessel cohort synthesis, NURBS encoding, diffusion training and
/// sampling, baselines and benchmarks.
#[derive(Debug, Parser)]
#[command(name = "vesselgen", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Flags override the config file, which
/// overrides the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Pipeline config (JSON); missing fields take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// aorta, LSA, LCCA, RSA or RCCA.
    #[arg(long, global = true)]
    pub branch: Option<BranchId>,
    /// Classifier-free guidance weight.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Training batch for `train`, number of centerlines otherwise.
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Prompt bundle JSON for `condition`.
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Cl,
    Rad,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// PCA + Gaussian on flattened mesh vertices.
    PcaG,
    /// Independent PCA + Gaussian models for centerlines and radii.
    #[value(name = "pca-g-d")]
    #[serde(rename = "pca-g-d")]
    PcaGD,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Write a synthetic cohort.
    SynthData {
        #[arg(long, default_value_t = DEFAULT_COHORT_SIZE)]
        count: usize,
    },
    /// Encode every record of a cohort into (C, R) latents.
    Encode {
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Train the centerline and/or radii prior of one branch.
    Train {
        /// `<branch>_latents.json` from `encode`.
        #[arg(long)]
        latents: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        component: Component,
        /// Overrides the configured epoch count of both components.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Unprompted hierarchical samples.
    Sample {
        /// Directory holding the trained models.
        #[arg(long)]
        models: PathBuf,
        /// Radial profiles per centerline.
        #[arg(long)]
        per_centerline: Option<usize>,
    },
    /// Prompt-guided hierarchical samples (`--prompts` required).
    Condition {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        per_centerline: Option<usize>,
    },
    /// Linear shape-model baselines fitted to a cohort.
    Baseline {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Encoded latents for the decoupled model; the cohort's own
        /// latents are used otherwise.
        #[arg(long)]
        latents: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        count: usize,
    },
    /// Biomarker CSV for a cohort or for the meshes of a sampling run.
    Biomarkers {
        #[arg(long)]
        input: PathBuf,
    },
    /// Diffusion vs baselines: subspace distances and biomarker fidelity.
    Benchmark {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        latents: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        count: usize,
        /// Histogram bins for the subspace distances.
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Repeat the run described by a manifest and check its outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthData { .. } => "synth-data",
            Command::Encode { .. } => "encode",
            Command::Train { .. } => "train",
            Command::Sample { .. } => "sample",
            Command::Condition { .. } => "condition",
            Command::Baseline { .. } => "baseline",
            Command::Biomarkers { .. } => "biomarkers",
            Command::Benchmark { .. } => "benchmark",
            Command::Replay { .. } => "replay",
        }
    }
}
