//! Sessions, jobs and the worker pool behind the HTTP handlers.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Semaphore};
use vesselgen::cohort::BranchId;
use vesselgen::diffusion::{sample_hierarchical, HierarchicalConfig, HierarchicalModel};
use vesselgen::{Error, Result, VesselLatent};

use crate::prompt::{bundle, Prompt};
use crate::store::Store;
use crate::summary::{summarize, EnsembleSummary};

/// Hierarchical models keyed by branch, loaded from `<dir>/<branch>.json`.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<BranchId, (String, Arc<HierarchicalModel<f64>>)>,
}

impl ModelRegistry {
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut reg = ModelRegistry::default();
        for b in BranchId::ALL {
            let path = dir.join(format!("{}.json", b.name()));
            if path.exists() {
                let text = std::fs::read_to_string(&path)?;
                let model: HierarchicalModel<f64> = serde_json::from_str(&text)?;
                reg.insert(b, path.display().to_string(), model)?;
            }
        }
        if reg.models.is_empty() {
            return Err(Error::NotFound(format!("no branch models in {}", dir.display())));
        }
        Ok(reg)
    }

    pub fn insert(&mut self, branch: BranchId, name: String, model: HierarchicalModel<f64>) -> Result<()> {
        let p = branch.preset();
        if model.n != p.n || model.m != p.m {
            return Err(Error::Validation(format!(
                "{name}: model is {}×{} but {branch} expects {}×{}",
                model.n, model.m, p.n, p.m
            )));
        }
        self.models.insert(branch, (name, Arc::new(model)));
        Ok(())
    }

    pub fn get(&self, branch: BranchId) -> Option<&(String, Arc<HierarchicalModel<f64>>)> {
        self.models.get(&branch)
    }

    pub fn branches(&self) -> Vec<BranchId> {
        self.models.keys().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub branch: BranchId,
    /// Model the session samples from.
    pub model: String,
    pub prompts: Vec<Prompt>,
    pub jobs: Vec<String>,
}

/// Generation settings for one job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobRequest {
    pub centerlines: usize,
    pub radii_per_centerline: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for JobRequest {
    fn default() -> Self {
        let h = HierarchicalConfig::default();
        JobRequest {
            centerlines: h.centerlines,
            radii_per_centerline: h.radii_per_centerline,
            gamma: h.gamma,
            seed: 0,
        }
    }
}

/// Largest ensemble a single job may request.
pub const MAX_ENSEMBLE: usize = 500;

impl JobRequest {
    pub fn validate(&self) -> Result<()> {
        if self.centerlines == 0 || self.radii_per_centerline == 0 {
            return Err(Error::Validation("centerlines and radii_per_centerline must be at least 1".into()));
        }
        if self.centerlines * self.radii_per_centerline > MAX_ENSEMBLE {
            return Err(Error::Validation(format!("ensembles are limited to {MAX_ENSEMBLE} members")));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Validation("gamma must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub session: String,
    pub branch: BranchId,
    pub status: JobStatus,
    pub request: JobRequest,
    /// Prompts as they were when the job was submitted.
    pub prompts: Vec<Prompt>,
    pub summary: Option<EnsembleSummary>,
    pub error: Option<String>,
}

/// What the store keeps per job: latents rather than decoded meshes.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredJob {
    id: String,
    session: String,
    branch: BranchId,
    status: JobStatus,
    request: JobRequest,
    prompts: Vec<Prompt>,
    latents: Option<Vec<VesselLatent>>,
    error: Option<String>,
}

impl From<&JobRecord> for StoredJob {
    fn from(j: &JobRecord) -> Self {
        StoredJob {
            id: j.id.clone(),
            session: j.session.clone(),
            branch: j.branch,
            status: j.status,
            request: j.request,
            prompts: j.prompts.clone(),
            latents: j.summary.as_ref().map(|s| s.latents.clone()),
            error: j.error.clone(),
        }
    }
}

struct JobSlot {
    record: JobRecord,
    /// Serialized record, frozen once the job has finished.
    frozen: Option<Bytes>,
}

pub struct App {
    models: ModelRegistry,
    base: HierarchicalConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    jobs: RwLock<HashMap<String, Arc<Mutex<JobSlot>>>>,
    lanes: Mutex<HashMap<String, mpsc::UnboundedSender<String>>>,
    pool: Arc<Semaphore>,
    store: Option<Store>,
}

fn poisoned<T>(_: T) -> Error {
    Error::Numerical("state lock poisoned".into())
}

impl App {
    /// `base` supplies the guidance settings; jobs override K, L, γ and
    /// the seed. Must be called inside a Tokio runtime: stored sessions are
    /// reloaded and their job lanes started.
    pub fn new(models: ModelRegistry, base: HierarchicalConfig, workers: usize, store: Option<Store>) -> Result<Arc<Self>> {
        let app = Arc::new(App {
            models,
            base,
            sessions: RwLock::new(HashMap::new()),
            jobs: RwLock::new(HashMap::new()),
            lanes: Mutex::new(HashMap::new()),
            pool: Arc::new(Semaphore::new(workers.max(1))),
            store,
        });
        app.reload()?;
        Ok(app)
    }

    fn reload(self: &Arc<Self>) -> Result<()> {
        let Some(store) = &self.store else { return Ok(()) };
        let sessions: Vec<SessionState> = store.all("sessions")?;
        let stored: Vec<StoredJob> = store.all("jobs")?;
        for s in sessions {
            self.start_lane(&s.id);
            self.sessions.write().map_err(poisoned)?.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
        for j in stored {
            let mut record = JobRecord {
                id: j.id,
                session: j.session,
                branch: j.branch,
                status: j.status,
                request: j.request,
                prompts: j.prompts,
                summary: None,
                error: j.error,
            };
            match (record.status, j.latents) {
                (JobStatus::Done, Some(latents)) => {
                    record.summary = Some(summarize(record.branch, record.branch.preset(), latents)?);
                }
                (JobStatus::Failed, _) => {}
                _ => {
                    record.status = JobStatus::Failed;
                    record.error = Some("interrupted by a service restart".into());
                }
            }
            let frozen = Some(Bytes::from(serde_json::to_vec(&record)?));
            self.jobs
                .write()
                .map_err(poisoned)?
                .insert(record.id.clone(), Arc::new(Mutex::new(JobSlot { record, frozen })));
        }
        Ok(())
    }

    pub fn branches(&self) -> Vec<BranchId> {
        self.models.branches()
    }

    fn persist_session(&self, s: &SessionState) -> Result<()> {
        match &self.store {
            Some(store) => store.put("sessions", &s.id, s),
            None => Ok(()),
        }
    }

    fn persist_job(&self, j: &JobRecord) -> Result<()> {
        match &self.store {
            Some(store) => store.put("jobs", &j.id, &StoredJob::from(j)),
            None => Ok(()),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionState>>> {
        self.sessions
            .read()
            .map_err(poisoned)?
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {id}")))
    }

    fn job(&self, id: &str) -> Result<Arc<Mutex<JobSlot>>> {
        self.jobs
            .read()
            .map_err(poisoned)?
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("job {id}")))
    }

    pub fn create_session(self: &Arc<Self>, branch: &str) -> Result<SessionState> {
        let branch: BranchId = branch.parse()?;
        let (model, _) = self
            .models
            .get(branch)
            .ok_or_else(|| Error::NotFound(format!("no model loaded for {branch}")))?;
        let s = SessionState {
            id: uuid::Uuid::new_v4().simple().to_string(),
            branch,
            model: model.clone(),
            prompts: Vec::new(),
            jobs: Vec::new(),
        };
        self.persist_session(&s)?;
        self.start_lane(&s.id);
        self.sessions
            .write()
            .map_err(poisoned)?
            .insert(s.id.clone(), Arc::new(Mutex::new(s.clone())));
        Ok(s)
    }

    pub fn get_session(&self, id: &str) -> Result<SessionState> {
        Ok(self.session(id)?.lock().map_err(poisoned)?.clone())
    }

    pub fn add_prompt(&self, id: &str, prompt: Prompt) -> Result<Vec<Prompt>> {
        prompt.validate()?;
        let s = self.session(id)?;
        let mut s = s.lock().map_err(poisoned)?;
        s.prompts.push(prompt);
        self.persist_session(&s)?;
        Ok(s.prompts.clone())
    }

    pub fn remove_prompt(&self, id: &str, index: usize) -> Result<Vec<Prompt>> {
        let s = self.session(id)?;
        let mut s = s.lock().map_err(poisoned)?;
        if index >= s.prompts.len() {
            return Err(Error::NotFound(format!("prompt {index} (session has {})", s.prompts.len())));
        }
        s.prompts.remove(index);
        self.persist_session(&s)?;
        Ok(s.prompts.clone())
    }

    /// Queues a job on the session's lane; jobs of one session run in
    /// submission order, different sessions share the worker pool.
    pub fn submit(self: &Arc<Self>, id: &str, request: JobRequest) -> Result<JobRecord> {
        request.validate()?;
        let s = self.session(id)?;
        let record = {
            let mut s = s.lock().map_err(poisoned)?;
            let record = JobRecord {
                id: uuid::Uuid::new_v4().simple().to_string(),
                session: s.id.clone(),
                branch: s.branch,
                status: JobStatus::Queued,
                request,
                prompts: s.prompts.clone(),
                summary: None,
                error: None,
            };
            s.jobs.push(record.id.clone());
            self.persist_session(&s)?;
            record
        };
        self.persist_job(&record)?;
        self.jobs.write().map_err(poisoned)?.insert(
            record.id.clone(),
            Arc::new(Mutex::new(JobSlot {
                record: record.clone(),
                frozen: None,
            })),
        );
        let lanes = self.lanes.lock().map_err(poisoned)?;
        let lane = lanes
            .get(id)
            .ok_or_else(|| Error::Numerical(format!("session {id} has no job lane")))?;
        lane.send(record.id.clone())
            .map_err(|_| Error::Numerical("job lane closed".into()))?;
        Ok(record)
    }

    /// Current job state as JSON; identical bytes once the job has finished.
    pub fn poll(&self, id: &str) -> Result<Bytes> {
        let slot = self.job(id)?;
        let slot = slot.lock().map_err(poisoned)?;
        match &slot.frozen {
            Some(b) => Ok(b.clone()),
            None => Ok(Bytes::from(serde_json::to_vec(&slot.record)?)),
        }
    }

    pub fn job_record(&self, id: &str) -> Result<JobRecord> {
        Ok(self.job(id)?.lock().map_err(poisoned)?.record.clone())
    }

    fn start_lane(self: &Arc<Self>, session: &str) {
        let (tx, mut rx) = mpsc::unbounded_channel::<String>();
        if let Ok(mut lanes) = self.lanes.lock() {
            lanes.insert(session.to_string(), tx);
        }
        let app = Arc::clone(self);
        tokio::spawn(async move {
            while let Some(job) = rx.recv().await {
                let Ok(_permit) = app.pool.clone().acquire_owned().await else { break };
                if let Err(e) = app.run(&job).await {
                    log::error!("job {job}: {e}");
                }
            }
        });
    }

    async fn run(self: &Arc<Self>, job: &str) -> Result<()> {
        let slot = self.job(job)?;
        let (branch, request, prompts) = {
            let mut s = slot.lock().map_err(poisoned)?;
            s.record.status = JobStatus::Running;
            (s.record.branch, s.record.request, s.record.prompts.clone())
        };
        let model = self
            .models
            .get(branch)
            .map(|(_, m)| Arc::clone(m))
            .ok_or_else(|| Error::NotFound(format!("no model loaded for {branch}")))?;
        let cfg = HierarchicalConfig {
            centerlines: request.centerlines,
            radii_per_centerline: request.radii_per_centerline,
            gamma: request.gamma,
            seed: request.seed,
            ..self.base.clone()
        };
        let outcome = tokio::task::spawn_blocking(move || {
            let latents = sample_hierarchical(&model, &bundle(&prompts), &cfg)?;
            summarize(branch, branch.preset(), latents)
        })
        .await
        .unwrap_or_else(|e| Err(Error::Numerical(format!("worker panicked: {e}"))));
        let mut s = slot.lock().map_err(poisoned)?;
        match outcome {
            Ok(summary) => {
                s.record.status = JobStatus::Done;
                s.record.summary = Some(summary);
            }
            Err(e) => {
                s.record.status = JobStatus::Failed;
                s.record.error = Some(e.to_string());
            }
        }
        s.frozen = Some(Bytes::from(serde_json::to_vec(&s.record)?));
        self.persist_job(&s.record)
    }
}

/// Summary of a finished job, or why there is none yet.
pub fn finished_summary(record: &JobRecord) -> std::result::Result<&EnsembleSummary, String> {
    match (record.status, &record.summary) {
        (JobStatus::Done, Some(s)) => Ok(s),
        (JobStatus::Failed, _) => Err(format!("job {} failed: {}", record.id, record.error.as_deref().unwrap_or("unknown"))),
        (status, _) => Err(format!("job {} is {status:?}", record.id)),
    }
}
