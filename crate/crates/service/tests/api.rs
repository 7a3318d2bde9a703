use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use vesselgen::cohort::{ingest, make_synthetic_cohort, write_polyline, BranchId, Orientation};
use vesselgen::diffusion::{train_hierarchical, Guidance, HierarchicalConfig, HierarchicalModel, NoiseSchedule, TrainConfig};
use vesselgen::geometry::knots::KnotVector;
use vesselgen::geometry::{uniform_params, CurveSampler};
use vesselgen::VesselLatent;
use vesselgen_service::summary::EnsembleSummary;
use vesselgen_service::{router, App, JobRecord, ModelRegistry, Store};

/// Small RCCA model trained on a synthetic cohort, shared by every test.
fn model() -> &'static HierarchicalModel<f64> {
    static MODEL: OnceLock<HierarchicalModel<f64>> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cohort = make_synthetic_cohort(5, 30).unwrap();
        let latents = cohort.latents(BranchId::Rcca).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 40,
            steps_per_epoch: 50,
            hidden: 64,
            blocks: 2,
            final_lr_fraction: 0.05,
            seed: 1,
            ..TrainConfig::default()
        };
        train_hierarchical(&latents, &NoiseSchedule::default(), &cfg, &TrainConfig { seed: 2, ..cfg.clone() })
            .unwrap()
            .0
    })
}

fn registry() -> ModelRegistry {
    let mut r = ModelRegistry::default();
    r.insert(BranchId::Rcca, "rcca-fixture".into(), model().clone()).unwrap();
    r
}

fn app_with(store: Option<Store>) -> Router {
    router(App::new(registry(), HierarchicalConfig::default(), 2, store).unwrap())
}

/// Gaussian prompt likelihood (σ = 0.3 cm) instead of the default
/// residual-normalized step.
fn guided_app() -> Router {
    let base = HierarchicalConfig {
        guidance: Guidance::Gaussian { variance_inflation: 0.0 },
        dps_sigma: 0.3,
        ..HierarchicalConfig::default()
    };
    router(App::new(registry(), base, 2, None).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn new_session(app: &Router, branch: &str) -> String {
    let (s, v) = call_json(app, Method::POST, "/sessions", Some(json!({ "branch": branch }))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn wait_done(app: &Router, job: &str) -> (Vec<u8>, JobRecord) {
    for _ in 0..2400 {
        let (s, b) = call(app, Method::GET, &format!("/jobs/{job}"), None).await;
        assert_eq!(s, StatusCode::OK);
        let r: JobRecord = serde_json::from_slice(&b).unwrap();
        match r.status {
            vesselgen_service::JobStatus::Done => return (b, r),
            vesselgen_service::JobStatus::Failed => panic!("job failed: {:?}", r.error),
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("job {job} did not finish");
}

async fn run_job(app: &Router, session: &str, body: Value) -> (Vec<u8>, JobRecord) {
    let (s, v) = call_json(app, Method::POST, &format!("/sessions/{session}/jobs"), Some(body)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    wait_done(app, v["job_id"].as_str().unwrap()).await
}

/// Cross-section loop of a held-out vessel at arc fraction `f`.
fn contour(truth: &VesselLatent, f: f64) -> Value {
    let p = BranchId::Rcca.preset();
    let mesh = truth.mesh(p.mesh_u, p.mesh_v).unwrap();
    let a = ((p.mesh_u - 1) as f64 * f).round() as usize;
    let pts: Vec<[f64; 3]> = (0..p.mesh_v)
        .step_by(4)
        .map(|b| {
            let v = mesh.vertices[a * p.mesh_v + b];
            [v.x, v.y, v.z]
        })
        .collect();
    json!({ "kind": "contour", "points": pts })
}

fn held_out() -> VesselLatent {
    let c = make_synthetic_cohort(77, 5).unwrap();
    c.branch(BranchId::Rcca)[0].latent.clone().unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn sessions_are_created_listed_and_validated() {
    let app = app_with(None);
    let a = new_session(&app, "RCCA").await;
    let b = new_session(&app, "rcca").await;
    assert_ne!(a, b);
    let (s, v) = call_json(&app, Method::GET, &format!("/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["prompts"], json!([]));
    assert_eq!(v["branch"], json!("RCCA"));
    let (s, v) = call_json(&app, Method::POST, "/sessions", Some(json!({ "branch": "femoral" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{v}");
    // a known branch without a loaded model
    let (s, _) = call_json(&app, Method::POST, "/sessions", Some(json!({ "branch": "LSA" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, Method::POST, "/sessions", Some(json!({ "twig": 1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::GET, "/sessions/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn prompts_round_trip_with_indices() {
    let app = app_with(None);
    let id = new_session(&app, "RCCA").await;
    let uri = format!("/sessions/{id}/prompts");
    let p0 = json!({ "kind": "point", "points": [[0.0, 0.0, 1.0]], "label": "apex" });
    let (s, v) = call_json(&app, Method::POST, &uri, Some(p0.clone())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v[0]["index"], json!(0));
    assert_eq!(v[0]["label"], json!("apex"));
    let p1 = json!({ "kind": "contour", "points": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]] });
    let (_, v) = call_json(&app, Method::POST, &uri, Some(p1)).await;
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["index"], json!(1));
    let (s, v) = call_json(&app, Method::DELETE, &format!("{uri}/1"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!([{ "index": 0, "kind": "point", "points": [[0.0, 0.0, 1.0]], "label": "apex" }]));

    let short = json!({ "kind": "contour", "points": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] });
    assert_eq!(call(&app, Method::POST, &uri, Some(short)).await.0, StatusCode::BAD_REQUEST);
    let empty = json!({ "kind": "patch", "points": [] });
    assert_eq!(call(&app, Method::POST, &uri, Some(empty)).await.0, StatusCode::BAD_REQUEST);
    let flat = json!({ "kind": "point", "points": [[1.0, 2.0]] });
    assert_eq!(call(&app, Method::POST, &uri, Some(flat)).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, Method::DELETE, &format!("{uri}/5"), None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, Method::DELETE, &format!("{uri}/x"), None).await.0, StatusCode::BAD_REQUEST);
    let (_, v) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(v["prompts"].as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn interleaved_sessions_do_not_share_prompts() {
    let app = app_with(None);
    let a = new_session(&app, "RCCA").await;
    let b = new_session(&app, "RCCA").await;
    let mut tasks = Vec::new();
    for k in 0..40 {
        let (app, id) = (app.clone(), if k % 2 == 0 { a.clone() } else { b.clone() });
        tasks.push(tokio::spawn(async move {
            let tag = if k % 2 == 0 { "A" } else { "B" };
            let p = json!({ "kind": "point", "points": [[k as f64, 0.0, 0.0]], "label": tag });
            call(&app, Method::POST, &format!("/sessions/{id}/prompts"), Some(p)).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    for (id, tag) in [(&a, "A"), (&b, "B")] {
        let (_, v) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
        let prompts = v["prompts"].as_array().unwrap();
        assert_eq!(prompts.len(), 20);
        assert!(prompts.iter().all(|p| p["label"] == json!(tag)));
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn jobs_summarize_export_and_repeat() {
    let app = app_with(None);
    let id = new_session(&app, "RCCA").await;
    let req = json!({ "centerlines": 3, "radii_per_centerline": 2, "gamma": 1.0, "seed": 4 });
    let (bytes, rec) = run_job(&app, &id, req.clone()).await;
    let s: &EnsembleSummary = rec.summary.as_ref().unwrap();
    let p = BranchId::Rcca.preset();
    assert_eq!((s.n, s.m), (p.n, p.m));
    assert_eq!(s.latents.len(), 6);
    assert_eq!(s.meshes.len(), 6);
    assert!(s.meshes.iter().all(|m| m.vertices.len() == p.mesh_u * p.mesh_v));
    assert_eq!(s.sections.len(), p.n);
    assert!(s.sections.iter().all(|x| x.position_std >= 0.0 && x.radius_std >= 0.0));
    assert!(s.total_uncertainty > 0.0);
    assert!(rec.prompts.is_empty());

    // immutable snapshot: re-polling gives the same bytes
    let (_, again) = call(&app, Method::GET, &format!("/jobs/{}", rec.id), None).await;
    assert_eq!(again, bytes);
    // same seed, same prompts: same ensemble
    let (_, rec2) = run_job(&app, &id, req).await;
    assert_eq!(rec2.summary, rec.summary);
    let (_, v) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(v["jobs"].as_array().unwrap().len(), 2);

    // latent export decodes to the summary meshes
    let (st, lat) = call(&app, Method::GET, &format!("/jobs/{}/export?format=latent", rec.id), None).await;
    assert_eq!(st, StatusCode::OK);
    let lat: Vec<VesselLatent> = serde_json::from_slice(&lat).unwrap();
    for (l, m) in lat.iter().zip(&s.meshes) {
        let d = l.mesh(p.mesh_u, p.mesh_v).unwrap();
        let err = d.vertices.iter().zip(&m.vertices).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
    }
    // OBJ export re-ingests, with the decoded centerline beside it
    let (st, obj) = call(&app, Method::GET, &format!("/jobs/{}/export?format=obj&sample=1", rec.id), None).await;
    assert_eq!(st, StatusCode::OK);
    let knots = KnotVector::clamped_averaged(&uniform_params::<f64>(p.n), 3).unwrap();
    let curve = CurveSampler::new(&knots, (0..50).map(|k| k as f64 / 49.0).collect()).unwrap();
    let cl = write_polyline(&curve.points(&lat[1].control_points));
    let rec_in = ingest(
        &cl,
        std::str::from_utf8(&obj).unwrap(),
        BranchId::Rcca,
        Orientation::AsStated,
    )
    .unwrap();
    assert_eq!(rec_in.surface.len(), p.mesh_u * p.mesh_v);
    assert_eq!(rec_in.faces.len(), s.meshes[1].faces.len());

    let (st, _) = call(&app, Method::GET, &format!("/jobs/{}/export?format=stl", rec.id), None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, Method::GET, &format!("/jobs/{}/export?format=obj&sample=6", rec.id), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, Method::GET, "/jobs/unknown/export?format=obj", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, Method::GET, "/jobs/unknown", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_job_requests_and_unfinished_exports() {
    let app = app_with(None);
    let id = new_session(&app, "RCCA").await;
    let uri = format!("/sessions/{id}/jobs");
    for bad in [json!({ "centerlines": 0 }), json!({ "gamma": -1.0 }), json!({ "batch": 3 }), json!({ "centerlines": 400, "radii_per_centerline": 2 })] {
        assert_eq!(call(&app, Method::POST, &uri, Some(bad)).await.0, StatusCode::BAD_REQUEST);
    }
    assert_eq!(call(&app, Method::POST, "/sessions/nope/jobs", None).await.0, StatusCode::NOT_FOUND);
    // a long job followed by a short one: FIFO, so the second waits
    let (_, first) = call_json(&app, Method::POST, &uri, Some(json!({ "centerlines": 40, "radii_per_centerline": 5 }))).await;
    let (s, second) = call_json(&app, Method::POST, &uri, None).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    for job in [&first, &second] {
        let (st, v) = call_json(&app, Method::GET, &format!("/jobs/{}/export?format=obj", job["job_id"].as_str().unwrap()), None).await;
        assert_eq!(st, StatusCode::CONFLICT, "{v}");
    }
    let (_, r2) = wait_done(&app, second["job_id"].as_str().unwrap()).await;
    let (_, r1) = call_json(&app, Method::GET, &format!("/jobs/{}", first["job_id"].as_str().unwrap()), None).await;
    assert_eq!(r1["status"], json!("done"));
    // an empty body takes the defaults
    let d = HierarchicalConfig::default();
    assert_eq!(r2.request.centerlines, d.centerlines);
    assert_eq!(r2.summary.unwrap().latents.len(), d.centerlines * d.radii_per_centerline);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn restart_reloads_sessions_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let (id, job, bytes) = {
        let app = app_with(Some(Store::open(dir.path()).unwrap()));
        let id = new_session(&app, "RCCA").await;
        let p = json!({ "kind": "point", "points": [[0.5, 0.0, 2.0]] });
        call(&app, Method::POST, &format!("/sessions/{id}/prompts"), Some(p)).await;
        let (bytes, rec) = run_job(&app, &id, json!({ "centerlines": 2, "radii_per_centerline": 2, "seed": 9 })).await;
        (id, rec.id, bytes)
    };
    let app = app_with(Some(Store::open(dir.path()).unwrap()));
    let (s, v) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["prompts"].as_array().unwrap().len(), 1);
    assert_eq!(v["jobs"], json!([job]));
    let (_, reloaded) = call(&app, Method::GET, &format!("/jobs/{job}"), None).await;
    let a: JobRecord = serde_json::from_slice(&bytes).unwrap();
    let b: JobRecord = serde_json::from_slice(&reloaded).unwrap();
    assert_eq!(a, b);
    // the reloaded session keeps accepting jobs
    run_job(&app, &id, json!({ "centerlines": 1, "radii_per_centerline": 1 })).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn a_fourth_contour_does_not_raise_uncertainty() {
    let app = guided_app();
    let id = new_session(&app, "RCCA").await;
    let truth = held_out();
    let req = json!({ "centerlines": 8, "radii_per_centerline": 2, "gamma": 1.0, "seed": 21 });
    let mut totals = Vec::new();
    for f in [0.2, 0.5, 0.8] {
        call(&app, Method::POST, &format!("/sessions/{id}/prompts"), Some(contour(&truth, f))).await;
    }
    let (_, three) = run_job(&app, &id, req.clone()).await;
    totals.push(three.summary.unwrap().total_uncertainty);
    call(&app, Method::POST, &format!("/sessions/{id}/prompts"), Some(contour(&truth, 0.35))).await;
    let (_, four) = run_job(&app, &id, req).await;
    assert_eq!(four.prompts.len(), 4);
    totals.push(four.summary.unwrap().total_uncertainty);
    assert!(totals[1] <= totals[0], "{totals:?}");
}

#[test]
fn registry_loads_branch_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ModelRegistry::load_dir(dir.path()).is_err());
    std::fs::write(dir.path().join("RCCA.json"), serde_json::to_string(model()).unwrap()).unwrap();
    let r = ModelRegistry::load_dir(dir.path()).unwrap();
    assert_eq!(r.branches(), vec![BranchId::Rcca]);
    // wrong preset for the branch
    let mut bad = ModelRegistry::default();
    assert!(bad.insert(BranchId::Aorta, "x".into(), model().clone()).is_err());
    let _ = Arc::new(r);
}
