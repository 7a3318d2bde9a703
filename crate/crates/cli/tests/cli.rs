use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::Parser;
use vesselgen::cohort::{read_biomarker_csv, BranchId, Cohort, BIOMARKER_NAMES};
use vesselgen::PipelineConfig;
use vesselgen_cli::commands::{BenchmarkReport, LatentSet};
use vesselgen_cli::{blob_hash, resolve_config, Cli, RunManifest};

fn vesselgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vesselgen"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = vesselgen(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::read(&dir.join("run.json")).unwrap()
}

fn parse(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("vesselgen").chain(args.iter().copied())).unwrap()
}

/// Small, fast training settings for the RCCA branch (8 sections).
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    let train = r#"{"hidden": 16, "blocks": 1, "epochs": 3, "steps_per_epoch": 5, "batch_size": 4}"#;
    let text = format!(
        r#"{{"centerline_train": {train}, "radii_train": {train},
            "hierarchical": {{"centerlines": 3, "radii_per_centerline": 2, "seed": 4}}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn cohort_below_the_minimum_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vesselgen(&["synth-data", "--count", "1", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn missing_out_and_missing_inputs_exit_with_code_2() {
    assert_eq!(vesselgen(&["synth-data"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let nowhere = tmp.path().join("absent");
    let out = vesselgen(&["encode", "--cohort", s(&nowhere), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn default_cohort_has_thirty_records_per_branch() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth-data", "--out", s(tmp.path())]);
    let cohort = Cohort::read(tmp.path()).unwrap();
    assert_eq!(cohort.len(), 150);
    for b in BranchId::ALL {
        assert_eq!(cohort.branch(b).len(), 30);
    }
}

#[test]
fn same_seed_gives_identical_output_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["synth-data", "--count", "5", "--seed", "12", "--out", s(&a)]);
    ok(&["synth-data", "--count", "5", "--seed", "12", "--out", s(&b)]);
    ok(&["synth-data", "--count", "5", "--seed", "13", "--out", s(&c)]);
    let (ma, mb, mc) = (manifest(&a), manifest(&b), manifest(&c));
    assert!(!ma.outputs.is_empty());
    assert_eq!(ma.outputs, mb.outputs);
    assert_ne!(ma.outputs, mc.outputs);
    // recorded hashes match the bytes on disk
    for d in &ma.outputs {
        assert_eq!(blob_hash(&std::fs::read(a.join(&d.path)).unwrap()), d.hash, "{}", d.path);
    }
}

#[test]
fn replay_reproduces_a_run_and_rejects_tampered_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    ok(&["synth-data", "--count", "5", "--seed", "3", "--out", s(&first)]);
    let again = tmp.path().join("again");
    ok(&["replay", "--manifest", s(&first.join("run.json")), "--out", s(&again)]);
    assert_eq!(manifest(&first).outputs, manifest(&again).outputs);

    let mut m = manifest(&first);
    m.outputs[0].hash = blob_hash(b"something else");
    let forged = tmp.path().join("forged");
    std::fs::create_dir_all(&forged).unwrap();
    m.write(&forged).unwrap();
    let out = vesselgen(&["replay", "--manifest", s(&forged.join("run.json")), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn training_defaults_resolve_from_an_empty_command_line() {
    let cfg = resolve_config(&parse(&["train", "--latents", "l.json"])).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
    assert_eq!(cfg.centerline_train.learning_rate, 8e-5);
    assert_eq!(cfg.centerline_train.batch_size, 110);
    assert_eq!(cfg.radii_train.learning_rate, 8e-5);
    assert_eq!(cfg.radii_train.batch_size, 110);
}

#[test]
fn flags_override_the_file_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.json");
    std::fs::write(
        &path,
        r#"{"centerline_train": {"batch_size": 32, "epochs": 7}, "hierarchical": {"gamma": 2.0, "seed": 9}}"#,
    )
    .unwrap();
    let file = resolve_config(&parse(&["--config", s(&path), "train", "--latents", "l.json"])).unwrap();
    assert_eq!(file.centerline_train.batch_size, 32);
    assert_eq!(file.centerline_train.epochs, 7);
    assert_eq!(file.radii_train.batch_size, 110);
    assert_eq!(file.hierarchical.gamma, 2.0);
    assert_eq!(file.hierarchical.seed, 9);

    let flags = resolve_config(&parse(&[
        "--config", s(&path), "--batch", "16", "--seed", "5", "--gamma", "0.5", "train", "--latents", "l.json",
        "--epochs", "2",
    ]))
    .unwrap();
    assert_eq!(flags.centerline_train.batch_size, 16);
    assert_eq!(flags.radii_train.batch_size, 16);
    assert_eq!(flags.centerline_train.epochs, 2);
    assert_eq!(flags.hierarchical.gamma, 0.5);
    assert_eq!(flags.hierarchical.seed, 5);
    assert_eq!(flags.centerline_train.seed, 5);
    assert_eq!(flags.radii_train.seed, 6);

    // outside `train`, --batch is the number of centerlines
    let sample = resolve_config(&parse(&["--batch", "4", "sample", "--models", "m", "--per-centerline", "3"])).unwrap();
    assert_eq!(sample.hierarchical.centerlines, 4);
    assert_eq!(sample.hierarchical.radii_per_centerline, 3);
    assert_eq!(sample.centerline_train.batch_size, 110);
}

#[test]
fn malformed_config_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, r#"{"centerline_train": {"learning_rate": -1.0}}"#).unwrap();
    let out = vesselgen(&["--config", s(&path), "synth-data", "--count", "5", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&path, r#"{"no_such_key": 1}"#).unwrap();
    let out = vesselgen(&["--config", s(&path), "synth-data", "--count", "5", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

/// synth-data → encode → train → sample / condition → baselines →
/// biomarkers → benchmark on one small branch.
#[test]
fn small_branch_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = tiny_config(root);
    let c = s(&cfg);
    let (cohort, enc, models) = (root.join("cohort"), root.join("enc"), root.join("models"));

    ok(&["synth-data", "--count", "6", "--seed", "21", "--out", s(&cohort)]);
    ok(&["--config", c, "--branch", "RCCA", "encode", "--cohort", s(&cohort), "--out", s(&enc)]);
    let latents = enc.join("RCCA_latents.json");
    let set = LatentSet::read(&latents).unwrap();
    assert_eq!(set.branch, BranchId::Rcca);
    assert_eq!(set.latents.len(), 6);
    assert!(!enc.join("aorta_latents.json").exists());

    // two separate component runs into one directory produce the bundle
    ok(&["--config", c, "train", "--latents", s(&latents), "--component", "cl", "--out", s(&models)]);
    assert!(!models.join("RCCA.json").exists());
    ok(&["--config", c, "train", "--latents", s(&latents), "--component", "rad", "--out", s(&models)]);
    for f in ["RCCA_cl.json", "RCCA_rad.json", "RCCA.json", "RCCA_cl_loss.csv", "RCCA_rad_loss.csv"] {
        assert!(models.join(f).exists(), "{f}");
    }
    let loss = std::fs::read_to_string(models.join("RCCA_cl_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 3);

    let sample = root.join("sample");
    ok(&["--config", c, "--branch", "RCCA", "sample", "--models", s(&models), "--out", s(&sample)]);
    let drawn = LatentSet::read(&sample.join("latents.json")).unwrap();
    assert_eq!(drawn.latents.len(), 3 * 2);
    assert!(sample.join("meshes/sample_0000.obj").exists());
    let m = manifest(&sample);
    assert_eq!(m.branch, Some(BranchId::Rcca));
    assert!(m.inputs.iter().any(|d| d.path.ends_with("RCCA.json")));

    // `sample` refuses prompts; `condition` needs them
    let prompts = root.join("empty.json");
    std::fs::write(&prompts, "{}").unwrap();
    let refused = vesselgen(&[
        "--branch", "RCCA", "--prompts", s(&prompts), "sample", "--models", s(&models), "--out", s(&root.join("r")),
    ]);
    assert_eq!(refused.status.code(), Some(2));
    let missing = vesselgen(&["--branch", "RCCA", "condition", "--models", s(&models), "--out", s(&root.join("r"))]);
    assert_eq!(missing.status.code(), Some(2));

    // an empty prompt bundle conditions on nothing
    let cond = root.join("cond");
    ok(&[
        "--config", c, "--branch", "RCCA", "--prompts", s(&prompts), "condition", "--models", s(&models), "--out",
        s(&cond),
    ]);
    assert_eq!(
        std::fs::read(cond.join("latents.json")).unwrap(),
        std::fs::read(sample.join("latents.json")).unwrap()
    );

    // a contour prompt changes the draw
    let rec = &Cohort::read(&cohort).unwrap().branch(BranchId::Rcca)[0].surface.clone();
    let v = BranchId::Rcca.preset().mesh_v;
    let ring: Vec<_> = rec[v * 30..v * 31].iter().map(|p| [p.x, p.y, p.z]).collect();
    let contour = root.join("contour.json");
    std::fs::write(&contour, serde_json::json!({ "contours": [ring] }).to_string()).unwrap();
    let guided = root.join("guided");
    ok(&[
        "--config", c, "--branch", "RCCA", "--prompts", s(&contour), "condition", "--models", s(&models), "--out",
        s(&guided),
    ]);
    assert_ne!(
        std::fs::read(guided.join("latents.json")).unwrap(),
        std::fs::read(sample.join("latents.json")).unwrap()
    );

    // a model for another branch is not there
    let absent = vesselgen(&["--branch", "LSA", "sample", "--models", s(&models), "--out", s(&root.join("r"))]);
    assert_eq!(absent.status.code(), Some(2));

    for (method, expect) in [("pca-g", "pca.json"), ("pca-g-d", "pca_cl.json")] {
        let out = root.join(method);
        ok(&[
            "--branch", "RCCA", "baseline", "--cohort", s(&cohort), "--method", method, "--count", "4", "--out",
            s(&out),
        ]);
        assert!(out.join(expect).exists());
        assert!(out.join("meshes/sample_0003.obj").exists());
    }

    // biomarkers of a run read the branch from its manifest
    let marks = root.join("marks");
    ok(&["biomarkers", "--input", s(&root.join("pca-g")), "--out", s(&marks)]);
    let rows = read_biomarker_csv(std::fs::File::open(marks.join("biomarkers.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    let header = std::fs::read_to_string(marks.join("biomarkers.csv")).unwrap();
    for name in BIOMARKER_NAMES {
        assert!(header.lines().next().unwrap().contains(name), "{name}");
    }
    let cohort_marks = root.join("cohort_marks");
    ok(&["--branch", "RCCA", "biomarkers", "--input", s(&cohort), "--out", s(&cohort_marks)]);
    let rows = read_biomarker_csv(std::fs::File::open(cohort_marks.join("biomarkers.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);

    let bench = root.join("bench");
    ok(&[
        "--config", c, "--branch", "RCCA", "benchmark", "--cohort", s(&cohort), "--models", s(&models), "--count",
        "6", "--bins", "4", "--out", s(&bench),
    ]);
    let report: BenchmarkReport =
        serde_json::from_str(&std::fs::read_to_string(bench.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.methods.len(), 3);
    assert_eq!(report.training_vessels, 6);
    assert_eq!(report.histogram_edges.len(), 5);
    for (m, h) in report.methods.iter().zip(&report.histograms) {
        assert_eq!(h.iter().sum::<usize>(), m.samples, "{}", m.method);
        assert!(m.comparison.markers.iter().all(|k| (0.0..=1.0).contains(&k.ks)));
    }
    // PCA-G samples lie in the span of the training meshes
    assert!(report.methods[1].subspace_max < 1e-6 * report.histogram_edges[4].max(1.0));
    for f in ["report.md", "subspace_distance.csv", "subspace_histogram.csv", "biomarker_comparison.csv"] {
        assert!(bench.join(f).exists(), "{f}");
    }

    // training replays bit for bit
    let both = root.join("both");
    ok(&["--config", c, "train", "--latents", s(&latents), "--out", s(&both)]);
    assert_eq!(
        std::fs::read(both.join("RCCA.json")).unwrap(),
        std::fs::read(models.join("RCCA.json")).unwrap()
    );
    let replayed = root.join("replayed");
    ok(&["replay", "--manifest", s(&both.join("run.json")), "--out", s(&replayed)]);
    assert_eq!(manifest(&both).outputs, manifest(&replayed).outputs);
}
