//! Command implementations. Each writes its outputs under `--out` and
//! returns the run manifest it also writes there.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vesselgen::baselines::{pca_fit, sample_pca_decoupled, sample_pca_gaussian, PcaModel};
use vesselgen::cohort::{
    biomarkers_from_mesh, compare_distributions, encode_vessel, make_synthetic_cohort, write_biomarker_csv,
    BiomarkerTable, BranchId, BranchPreset, Cohort, DistributionReport,
};
use vesselgen::diffusion::{
    sample_hierarchical, train, write_log_csv, DiffusionModel, HierarchicalConfig, HierarchicalModel, NoiseSchedule,
    PromptBundle,
};
use vesselgen::fitting::FitReport;
use vesselgen::geometry::io::LatentFile;
use vesselgen::geometry::{parse_obj, Vec3};
use vesselgen::{Error, PipelineConfig, QuadMesh, Result, VesselLatent};

use crate::cli::{Cli, Command, Component, Method};
use crate::manifest::{digest_input, FileDigest, OutDir, RunManifest, MANIFEST_NAME};

pub const LATENTS_FILE: &str = "latents.json";
pub const BIOMARKER_FILE: &str = "biomarkers.csv";
/// Decoupled-baseline radii are floored at this fraction of the largest
/// training radius.
pub const RADIUS_FLOOR: f64 = 1e-3;

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

/// Latents of one branch, as written by `encode`, `sample` and `condition`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSet {
    pub branch: BranchId,
    pub latents: Vec<LatentFile>,
}

impl LatentSet {
    pub fn new(branch: BranchId, latents: &[VesselLatent]) -> Self {
        LatentSet {
            branch,
            latents: latents.iter().map(LatentFile::from_latent).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn decode(&self) -> Result<Vec<VesselLatent>> {
        self.latents.iter().map(|l| l.to_latent()).collect()
    }
}

/// Radial-fit outcome of one encoded record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub index: usize,
    #[serde(flatten)]
    pub report: FitReport,
}

/// Config file (if any) with command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let c = &cli.common;
    let mut cfg = PipelineConfig::load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.hierarchical.seed = s;
        cfg.sampler.seed = s;
        cfg.centerline_train.seed = s;
        cfg.radii_train.seed = s.wrapping_add(1);
    }
    if let Some(g) = c.gamma {
        cfg.hierarchical.gamma = g;
        cfg.sampler.gamma = g;
    }
    match &cli.command {
        Command::Train { epochs, .. } => {
            if let Some(b) = c.batch {
                cfg.centerline_train.batch_size = b;
                cfg.radii_train.batch_size = b;
            }
            if let Some(e) = *epochs {
                cfg.centerline_train.epochs = e;
                cfg.radii_train.epochs = e;
            }
        }
        cmd => {
            if let Some(b) = c.batch {
                cfg.hierarchical.centerlines = b;
                cfg.sampler.batch = b;
            }
            if let Command::Sample { per_centerline: Some(l), .. } | Command::Condition { per_centerline: Some(l), .. } = cmd
            {
                cfg.hierarchical.radii_per_centerline = *l;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<RunManifest> {
    let out = cli.common.out.clone().ok_or_else(|| invalid("--out is required"))?;
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, &out);
    }
    let cfg = resolve_config(cli)?;
    execute(&cli.command, cfg, cli.common.branch, cli.common.prompts.clone(), &out)
}

/// Runs a command with a fully resolved config.
pub fn execute(
    command: &Command,
    cfg: PipelineConfig,
    branch: Option<BranchId>,
    prompts: Option<PathBuf>,
    out: &Path,
) -> Result<RunManifest> {
    let mut dir = OutDir::create(out)?;
    let mut inputs = Vec::new();
    let seed = cfg.hierarchical.seed;
    match command {
        Command::SynthData { count } => synth_data(seed, *count, &mut dir)?,
        Command::Encode { cohort } => {
            inputs.extend(digest_input(cohort)?);
            encode(cohort, branch, &cfg, &mut dir)?;
        }
        Command::Train { latents, component, .. } => {
            inputs.extend(digest_input(latents)?);
            train_branch(latents, branch, *component, &cfg, &mut dir)?;
        }
        Command::Sample { models, .. } | Command::Condition { models, .. } => {
            let bundle = match (command, &prompts) {
                (Command::Sample { .. }, None) => PromptBundle::default(),
                (Command::Sample { .. }, Some(_)) => return Err(invalid("`sample` takes no prompts; use `condition`")),
                (_, Some(p)) => {
                    inputs.extend(digest_input(p)?);
                    read_prompts(p)?
                }
                (_, None) => return Err(invalid("`condition` needs --prompts")),
            };
            let b = branch.unwrap_or(BranchId::Aorta);
            let (model, files) = load_model(models, b)?;
            for f in files {
                inputs.extend(digest_input(&f)?);
            }
            generate(&model, b, &cfg, &bundle, &mut dir)?;
        }
        Command::Baseline {
            cohort,
            method,
            latents,
            count,
        } => {
            inputs.extend(digest_input(cohort)?);
            if let Some(l) = latents {
                inputs.extend(digest_input(l)?);
            }
            baseline(cohort, latents.as_deref(), *method, *count, branch, &cfg, &mut dir)?;
        }
        Command::Biomarkers { input } => {
            inputs.extend(digest_input(input)?);
            biomarker_table(input, branch, &cfg, &mut dir)?;
        }
        Command::Benchmark {
            cohort,
            models,
            latents,
            count,
            bins,
        } => {
            inputs.extend(digest_input(cohort)?);
            let b = branch.unwrap_or(BranchId::Aorta);
            let (model, files) = load_model(models, b)?;
            for f in files {
                inputs.extend(digest_input(&f)?);
            }
            if let Some(l) = latents {
                inputs.extend(digest_input(l)?);
            }
            benchmark(cohort, &model, latents.as_deref(), b, *count, *bins, &cfg, &mut dir)?;
        }
        Command::Replay { .. } => return Err(invalid("replay manifests cannot be replayed")),
    }
    let manifest = RunManifest {
        tool: format!("vesselgen {}", env!("CARGO_PKG_VERSION")),
        command: command.clone(),
        seed,
        branch,
        prompts,
        config: cfg,
        inputs,
        outputs: dir.finish(),
    };
    manifest.write(out)?;
    Ok(manifest)
}

/// Re-executes a manifest into `out` and fails unless inputs and outputs
/// hash identically.
pub fn replay(path: &Path, out: &Path) -> Result<RunManifest> {
    let old = RunManifest::read(path)?;
    let again = execute(&old.command, old.config.clone(), old.branch, old.prompts.clone(), out)?;
    let differ = |a: &[FileDigest], b: &[FileDigest]| {
        let hashes = |v: &[FileDigest]| v.iter().map(|d| d.hash.clone()).collect::<Vec<_>>();
        hashes(a) != hashes(b)
    };
    if differ(&old.inputs, &again.inputs) {
        return Err(invalid("inputs changed since the recorded run"));
    }
    if old.outputs != again.outputs {
        return Err(Error::Numerical("replayed outputs differ from the recorded run".into()));
    }
    Ok(again)
}

fn synth_data(seed: u64, count: usize, dir: &mut OutDir) -> Result<()> {
    let cohort = make_synthetic_cohort(seed, count)?;
    let manifest = cohort.write(&dir.root)?;
    for e in &manifest.records {
        dir.adopt(&e.centerline)?;
        dir.adopt(&e.surface)?;
        if let Some(l) = &e.latent {
            dir.adopt(l)?;
        }
    }
    dir.adopt(vesselgen::cohort::MANIFEST_FILE)?;
    log::info!("wrote {} records ({} per branch)", cohort.len(), count);
    Ok(())
}

fn branches(branch: Option<BranchId>) -> Vec<BranchId> {
    branch.map_or_else(|| BranchId::ALL.to_vec(), |b| vec![b])
}

fn encode(cohort_dir: &Path, branch: Option<BranchId>, cfg: &PipelineConfig, dir: &mut OutDir) -> Result<()> {
    let cohort = Cohort::read(cohort_dir)?;
    for b in branches(branch) {
        let records = cohort.branch(b);
        if records.is_empty() {
            continue;
        }
        let preset = cfg.preset(b)?;
        let mut latents = Vec::new();
        let mut reports = Vec::new();
        for (k, rec) in records.iter().enumerate() {
            let enc = encode_vessel(rec, &preset, &cfg.fit)?;
            reports.push(FitRow {
                index: k,
                report: enc.report,
            });
            latents.push(enc.latent);
        }
        log::info!("encoded {} {b} records", latents.len());
        dir.write(&format!("{}_latents.json", b.name()), serde_json::to_string(&LatentSet::new(b, &latents))?)?;
        dir.write(&format!("{}_fit.json", b.name()), serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(())
}

fn flat(points: &[Vec3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflat(v: &[f64]) -> Vec<Vec3<f64>> {
    v.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> Result<ndarray::Array2<f64>> {
    let (k, d) = (rows.len(), rows.first().map_or(0, Vec::len));
    ndarray::Array2::from_shape_vec((k, d), rows.concat()).map_err(|e| invalid(e.to_string()))
}

fn cl_name(b: BranchId) -> String {
    format!("{}_cl.json", b.name())
}

fn rad_name(b: BranchId) -> String {
    format!("{}_rad.json", b.name())
}

fn hier_name(b: BranchId) -> String {
    format!("{}.json", b.name())
}

fn train_branch(
    latents_path: &Path,
    branch: Option<BranchId>,
    component: Component,
    cfg: &PipelineConfig,
    dir: &mut OutDir,
) -> Result<()> {
    let set = LatentSet::read(latents_path)?;
    let b = set.branch;
    if branch.is_some_and(|x| x != b) {
        return Err(invalid(format!("--branch {} but the latents are for {b}", branch.unwrap())));
    }
    let latents = set.decode()?;
    let preset = cfg.preset(b)?;
    if latents.iter().any(|l| l.n() != preset.n || l.m() != preset.m) {
        return Err(invalid(format!("{b} latents do not match the {}×{} preset", preset.n, preset.m)));
    }
    let schedule = NoiseSchedule::try_from(cfg.schedule)?;
    let cl = matrix(latents.iter().map(|l| l.flatten_centerline()).collect())?;
    if matches!(component, Component::Cl | Component::Both) {
        let out = train(cl.view(), None, schedule.clone(), &cfg.centerline_train)?;
        log::info!("{b} centerline prior: final loss {:?}", out.log.last().map(|l| l.loss));
        dir.write(&cl_name(b), serde_json::to_string(&out.model)?)?;
        let mut csv = Vec::new();
        write_log_csv(&out.log, &mut csv)?;
        dir.write(&format!("{}_cl_loss.csv", b.name()), csv)?;
    }
    if matches!(component, Component::Rad | Component::Both) {
        let rad = matrix(latents.iter().map(|l| l.radii.radii.clone()).collect())?;
        let out = train(rad.view(), Some(cl.view()), schedule, &cfg.radii_train)?;
        log::info!("{b} radii prior: final loss {:?}", out.log.last().map(|l| l.loss));
        dir.write(&rad_name(b), serde_json::to_string(&out.model)?)?;
        let mut csv = Vec::new();
        write_log_csv(&out.log, &mut csv)?;
        dir.write(&format!("{}_rad_loss.csv", b.name()), csv)?;
    }
    // once both stages are present, bundle them for sampling and serving
    let (clp, radp) = (dir.root.join(cl_name(b)), dir.root.join(rad_name(b)));
    if clp.exists() && radp.exists() {
        let model = HierarchicalModel::<f64>::new(DiffusionModel::load(&clp)?, DiffusionModel::load(&radp)?, preset.m)?;
        dir.write(&hier_name(b), serde_json::to_string(&model)?)?;
    }
    Ok(())
}

/// `<branch>.json`, or the two stage checkpoints when the bundle is absent.
pub fn load_model(models: &Path, b: BranchId) -> Result<(HierarchicalModel<f64>, Vec<PathBuf>)> {
    let bundle = models.join(hier_name(b));
    if bundle.exists() {
        let m: HierarchicalModel<f64> = serde_json::from_str(&std::fs::read_to_string(&bundle)?)?;
        return Ok((m, vec![bundle]));
    }
    let (clp, radp) = (models.join(cl_name(b)), models.join(rad_name(b)));
    if !clp.exists() || !radp.exists() {
        return Err(Error::NotFound(format!("no trained {b} models in {}", models.display())));
    }
    let m = HierarchicalModel::new(DiffusionModel::load(&clp)?, DiffusionModel::load(&radp)?, b.preset().m)?;
    Ok((m, vec![clp, radp]))
}

fn read_prompts(path: &Path) -> Result<PromptBundle<f64>> {
    let bundle: PromptBundle<f64> =
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| invalid(format!("prompts: {e}")))?;
    bundle.validate()?;
    Ok(bundle)
}

fn check_model(model: &HierarchicalModel<f64>, b: BranchId, preset: &BranchPreset) -> Result<()> {
    if model.n != preset.n || model.m != preset.m {
        return Err(invalid(format!(
            "{b} model is {}×{} but the preset is {}×{}",
            model.n, model.m, preset.n, preset.m
        )));
    }
    Ok(())
}

fn mesh_name(k: usize) -> String {
    format!("meshes/sample_{k:04}.obj")
}

/// Writes `latents.json` and one OBJ per latent that decodes.
fn write_latents(b: BranchId, latents: &[VesselLatent], preset: &BranchPreset, dir: &mut OutDir) -> Result<()> {
    dir.write(LATENTS_FILE, serde_json::to_string(&LatentSet::new(b, latents))?)?;
    for (k, l) in latents.iter().enumerate() {
        match l.mesh(preset.mesh_u, preset.mesh_v) {
            Ok(mesh) => {
                dir.write(&mesh_name(k), mesh.to_obj())?;
            }
            Err(e) => log::warn!("sample {k} does not decode: {e}"),
        }
    }
    Ok(())
}

fn generate(
    model: &HierarchicalModel<f64>,
    b: BranchId,
    cfg: &PipelineConfig,
    bundle: &PromptBundle<f64>,
    dir: &mut OutDir,
) -> Result<()> {
    let preset = cfg.preset(b)?;
    check_model(model, b, &preset)?;
    let latents = sample_hierarchical(model, bundle, &cfg.hierarchical)?;
    log::info!("sampled {} {b} vessels", latents.len());
    write_latents(b, &latents, &preset, dir)
}

fn training_latents(cohort: &Cohort, latents: Option<&Path>, b: BranchId) -> Result<Vec<VesselLatent>> {
    match latents {
        Some(p) => {
            let set = LatentSet::read(p)?;
            if set.branch != b {
                return Err(invalid(format!("latents are for {}, not {b}", set.branch)));
            }
            set.decode()
        }
        None => cohort.latents(b),
    }
}

fn mesh_pca(cohort: &Cohort, b: BranchId) -> Result<PcaModel> {
    let meshes: Vec<Vec<f64>> = cohort.branch(b).iter().map(|r| flat(&r.surface)).collect();
    pca_fit(&meshes, None)
}

fn decoupled(
    latents: &[VesselLatent],
    m: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(PcaModel, PcaModel, Vec<VesselLatent>)> {
    let cl = pca_fit(&latents.iter().map(|l| l.flatten_centerline()).collect::<Vec<_>>(), None)?;
    let rad = pca_fit(&latents.iter().map(|l| l.radii.radii.clone()).collect::<Vec<_>>(), None)?;
    let top = latents.iter().flat_map(|l| l.radii.radii.iter().copied()).fold(0.0, f64::max);
    let samples = sample_pca_decoupled(&cl, &rad, m, count, RADIUS_FLOOR * top, rng)?;
    Ok((cl, rad, samples))
}

#[allow(clippy::too_many_arguments)]
fn baseline(
    cohort_dir: &Path,
    latents: Option<&Path>,
    method: Method,
    count: usize,
    branch: Option<BranchId>,
    cfg: &PipelineConfig,
    dir: &mut OutDir,
) -> Result<()> {
    if count == 0 {
        return Err(invalid("--count must be at least 1"));
    }
    let b = branch.unwrap_or(BranchId::Aorta);
    let preset = cfg.preset(b)?;
    let cohort = Cohort::read(cohort_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.hierarchical.seed);
    match method {
        Method::PcaG => {
            let pca = mesh_pca(&cohort, b)?;
            dir.write("pca.json", serde_json::to_string(&pca)?)?;
            for (k, v) in sample_pca_gaussian(&pca, count, &mut rng).iter().enumerate() {
                dir.write(&mesh_name(k), QuadMesh::structured(unflat(v), preset.mesh_u, preset.mesh_v).to_obj())?;
            }
        }
        Method::PcaGD => {
            let train = training_latents(&cohort, latents, b)?;
            let (cl, rad, samples) = decoupled(&train, preset.m, count, &mut rng)?;
            dir.write("pca_cl.json", serde_json::to_string(&cl)?)?;
            dir.write("pca_rad.json", serde_json::to_string(&rad)?)?;
            write_latents(b, &samples, &preset, dir)?;
        }
    }
    Ok(())
}

fn markers_of(meshes: impl Iterator<Item = QuadMesh>) -> Vec<BiomarkerTable> {
    meshes
        .enumerate()
        .filter_map(|(k, m)| match biomarkers_from_mesh(&m) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("mesh {k}: {e}");
                None
            }
        })
        .collect()
}

/// Biomarkers of every record surface (cohort directories) or of every
/// `meshes/*.obj` of a sampling run.
fn biomarker_table(input: &Path, branch: Option<BranchId>, cfg: &PipelineConfig, dir: &mut OutDir) -> Result<()> {
    let from_run = RunManifest::read(&input.join(MANIFEST_NAME)).ok().and_then(|m| m.branch);
    let b = branch.or(from_run).unwrap_or(BranchId::Aorta);
    let preset = cfg.preset(b)?;
    let tables = if input.join(vesselgen::cohort::MANIFEST_FILE).exists() {
        let cohort = Cohort::read(input)?;
        markers_of(
            cohort
                .branch(b)
                .iter()
                .map(|r| QuadMesh::structured(r.surface.clone(), preset.mesh_u, preset.mesh_v)),
        )
    } else {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input.join("meshes"))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|x| x == "obj"));
        files.sort();
        let mut meshes = Vec::new();
        for f in &files {
            let mesh = parse_obj::<f64>(&std::fs::read_to_string(f)?)?;
            if mesh.vertices.len() != preset.mesh_u * preset.mesh_v {
                return Err(invalid(format!(
                    "{} has {} vertices; the {b} mesh is {}×{}",
                    f.display(),
                    mesh.vertices.len(),
                    preset.mesh_u,
                    preset.mesh_v
                )));
            }
            meshes.push(QuadMesh::structured(mesh.vertices, preset.mesh_u, preset.mesh_v));
        }
        markers_of(meshes.into_iter())
    };
    if tables.is_empty() {
        return Err(invalid(format!("no {b} meshes with valid biomarkers in {}", input.display())));
    }
    let mut csv = Vec::new();
    write_biomarker_csv(&tables, &mut csv)?;
    dir.write(BIOMARKER_FILE, csv)?;
    Ok(())
}

/// Per-method summary in `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub samples: usize,
    /// Samples whose mesh gave valid biomarkers.
    pub valid: usize,
    pub subspace_median: f64,
    pub subspace_max: f64,
    pub mean_ks: f64,
    pub markers_within_0_3: usize,
    pub comparison: DistributionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub branch: BranchId,
    pub training_vessels: usize,
    pub methods: Vec<MethodSummary>,
    /// Bin edges shared by every method's histogram.
    pub histogram_edges: Vec<f64>,
    pub histograms: Vec<Vec<usize>>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// `bins` equal-width bins on `[0, max]`; the last bin is closed.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len() - 1;
    let mut h = vec![0; bins];
    let (lo, hi) = (edges[0], edges[bins]);
    for &v in values {
        let k = if hi > lo { (((v - lo) / (hi - lo)) * bins as f64).floor() as usize } else { 0 };
        h[k.min(bins - 1)] += 1;
    }
    h
}

#[allow(clippy::too_many_arguments)]
fn benchmark(
    cohort_dir: &Path,
    model: &HierarchicalModel<f64>,
    latents: Option<&Path>,
    b: BranchId,
    count: usize,
    bins: usize,
    cfg: &PipelineConfig,
    dir: &mut OutDir,
) -> Result<()> {
    if count == 0 || bins == 0 {
        return Err(invalid("--count and --bins must be at least 1"));
    }
    let preset = cfg.preset(b)?;
    check_model(model, b, &preset)?;
    let cohort = Cohort::read(cohort_dir)?;
    let records = cohort.branch(b);
    let truth = markers_of(records.iter().map(|r| QuadMesh::structured(r.surface.clone(), preset.mesh_u, preset.mesh_v)));
    let pca = mesh_pca(&cohort, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.hierarchical.seed);

    // diffusion: K centerlines × L profiles, trimmed to `count`
    let l = cfg.hierarchical.radii_per_centerline;
    let hcfg = HierarchicalConfig {
        centerlines: count.div_ceil(l),
        ..cfg.hierarchical.clone()
    };
    let mut diffusion = sample_hierarchical(model, &PromptBundle::default(), &hcfg)?;
    diffusion.truncate(count);
    let diffusion: Vec<QuadMesh> =
        diffusion.iter().filter_map(|l| l.mesh(preset.mesh_u, preset.mesh_v).ok()).collect();
    let coupled: Vec<QuadMesh> = sample_pca_gaussian(&pca, count, &mut rng)
        .iter()
        .map(|v| QuadMesh::structured(unflat(v), preset.mesh_u, preset.mesh_v))
        .collect();
    let train = training_latents(&cohort, latents, b)?;
    let (_, _, dec) = decoupled(&train, preset.m, count, &mut rng)?;
    let dec: Vec<QuadMesh> = dec.iter().filter_map(|l| l.mesh(preset.mesh_u, preset.mesh_v).ok()).collect();

    let methods = [("diffusion", diffusion), ("pca-g", coupled), ("pca-g-d", dec)];
    let mut distances = Vec::new();
    let mut summaries = Vec::new();
    let mut rows = String::from("method,index,subspace_distance\n");
    for (name, meshes) in &methods {
        let d: Vec<f64> = meshes.iter().map(|m| pca.subspace_distance(&flat(&m.vertices))).collect::<Result<_>>()?;
        for (k, v) in d.iter().enumerate() {
            rows.push_str(&format!("{name},{k},{v:e}\n"));
        }
        let marks = markers_of(meshes.iter().cloned());
        let mut csv = Vec::new();
        write_biomarker_csv(&marks, &mut csv)?;
        dir.write(&format!("biomarkers_{name}.csv"), csv)?;
        let comparison = compare_distributions(&marks, &truth)?;
        summaries.push(MethodSummary {
            method: name.to_string(),
            samples: meshes.len(),
            valid: marks.len(),
            subspace_median: median(&d),
            subspace_max: d.iter().copied().fold(0.0, f64::max),
            mean_ks: comparison.mean_ks(),
            markers_within_0_3: comparison.count_within(0.3),
            comparison,
        });
        distances.push(d);
    }
    let mut csv = Vec::new();
    write_biomarker_csv(&truth, &mut csv)?;
    dir.write("biomarkers_training.csv", csv)?;
    dir.write("subspace_distance.csv", rows)?;

    let top = distances.iter().flatten().copied().fold(0.0, f64::max);
    let edges: Vec<f64> = (0..=bins).map(|k| top * k as f64 / bins as f64).collect();
    let histograms: Vec<Vec<usize>> = distances.iter().map(|d| histogram(d, &edges)).collect();
    let mut hist = String::from("bin_low,bin_high,diffusion,pca_g,pca_g_d\n");
    for k in 0..bins {
        hist.push_str(&format!(
            "{:e},{:e},{},{},{}\n",
            edges[k],
            edges[k + 1],
            histograms[0][k],
            histograms[1][k],
            histograms[2][k]
        ));
    }
    dir.write("subspace_histogram.csv", hist)?;

    let mut table = String::from("method,marker,median,iqr,training_median,training_iqr,ks\n");
    for s in &summaries {
        for m in &s.comparison.markers {
            table.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.method, m.name, m.median_a, m.iqr_a, m.median_b, m.iqr_b, m.ks
            ));
        }
    }
    dir.write("biomarker_comparison.csv", table)?;

    let report = BenchmarkReport {
        branch: b,
        training_vessels: records.len(),
        methods: summaries,
        histogram_edges: edges,
        histograms,
    };
    dir.write("report.json", serde_json::to_string_pretty(&report)?)?;
    dir.write("report.md", render_report(&report))?;
    Ok(())
}

fn render_report(r: &BenchmarkReport) -> String {
    let mut s = format!("# {} benchmark ({} training vessels)\n\n", r.branch, r.training_vessels);
    s.push_str("| method | samples | valid | subspace median | subspace max | mean KS | KS ≤ 0.3 |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for m in &r.methods {
        s.push_str(&format!(
            "| {} | {} | {} | {:.3e} | {:.3e} | {:.3} | {}/9 |\n",
            m.method, m.samples, m.valid, m.subspace_median, m.subspace_max, m.mean_ks, m.markers_within_0_3
        ));
    }
    s.push_str("\n| marker |");
    for m in &r.methods {
        s.push_str(&format!(" {} KS |", m.method));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(r.methods.len()));
    s.push('\n');
    if let Some(first) = r.methods.first() {
        for (k, marker) in first.comparison.markers.iter().enumerate() {
            s.push_str(&format!("| {} |", marker.name));
            for m in &r.methods {
                s.push_str(&format!(" {:.3} |", m.comparison.markers[k].ks));
            }
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_every_value_once() {
        let edges = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(histogram(&[0.0, 0.5, 1.0, 2.9, 3.0], &edges), vec![2, 1, 2]);
        assert_eq!(histogram(&[0.0, 0.0], &[0.0, 0.0]), vec![2]);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
