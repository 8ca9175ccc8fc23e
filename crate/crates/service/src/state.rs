use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use classbot::clients::{Endpoint, DEFAULT_TIMEOUT};
use classbot::intent::{self, EpochMetrics};
use classbot::project::{load_project, save_project, Project, StoreError};
use serde::Serialize;

use crate::error::ApiError;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// One subdirectory per project.
    pub data_root: PathBuf,
    pub translation: Endpoint,
    pub generative: Endpoint,
    pub client_timeout: Duration,
    /// Pause after every training epoch. Zero outside of tests and demos.
    pub epoch_delay: Duration,
}

impl ServiceConfig {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Self {
            data_root: data_root.into(),
            translation: Endpoint::Stub,
            generative: Endpoint::Stub,
            client_timeout: DEFAULT_TIMEOUT,
            epoch_delay: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingJob {
    pub job_id: String,
    pub project: String,
    pub state: JobState,
    pub completed_epochs: usize,
    pub total_epochs: usize,
    pub metrics: Vec<EpochMetrics>,
    pub error: Option<String>,
}

/// A loaded project. Readers take the current snapshot and keep it for the
/// whole request; writers replace it after a successful save.
pub(crate) struct ProjectSlot {
    pub name: String,
    pub dir: PathBuf,
    /// Load-time invariant problems; a non-empty list makes the project read-only.
    pub issues: Vec<String>,
    writer: Mutex<()>,
    snapshot: RwLock<Arc<Project>>,
    pub running_job: Mutex<Option<String>>,
}

impl ProjectSlot {
    pub fn snapshot(&self) -> Arc<Project> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Applies `f` to a copy of the current project, saves it and publishes it.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut Project) -> Result<T, ApiError>) -> Result<(T, Arc<Project>), ApiError> {
        let _writer = self.writer.lock().expect("writer lock");
        if !self.issues.is_empty() {
            return Err(StoreError::Invariant(self.issues.clone()).into());
        }
        let mut project = (*self.snapshot()).clone();
        let out = f(&mut project)?;
        save_project(&project, &self.dir)?;
        let published = Arc::new(project);
        *self.snapshot.write().expect("snapshot lock") = published.clone();
        Ok((out, published))
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    projects: Mutex<HashMap<String, Arc<ProjectSlot>>>,
    jobs: Mutex<HashMap<String, Arc<Mutex<TrainingJob>>>>,
    next_job: AtomicU64,
}

pub fn valid_project_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && !name.starts_with(['.', '-'])
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            projects: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        }
    }

    fn dir_of(&self, name: &str) -> Result<PathBuf, ApiError> {
        if !valid_project_name(name) {
            return Err(ApiError::bad_request(format!(
                "invalid project name {name:?}: use letters, digits, '-' and '_'"
            )));
        }
        Ok(self.config.data_root.join(name))
    }

    pub fn list(&self) -> Result<Vec<String>, ApiError> {
        let mut names = Vec::new();
        let entries = match fs::read_dir(&self.config.data_root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(names),
            Err(e) => return Err(ApiError::internal(e.to_string())),
        };
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if valid_project_name(&name) && entry.path().join("manifest.json").is_file() {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }

    pub(crate) fn slot(&self, name: &str) -> Result<Arc<ProjectSlot>, ApiError> {
        let dir = self.dir_of(name)?;
        let mut projects = self.projects.lock().expect("projects lock");
        if let Some(slot) = projects.get(name) {
            return Ok(slot.clone());
        }
        let loaded = load_project(&dir).map_err(|e| match e {
            StoreError::NotAProject(_) => ApiError::not_found(format!("no project named {name:?}")),
            other => other.into(),
        })?;
        let slot = Arc::new(ProjectSlot {
            name: name.to_string(),
            dir,
            issues: loaded.issues,
            writer: Mutex::new(()),
            snapshot: RwLock::new(Arc::new(loaded.project)),
            running_job: Mutex::new(None),
        });
        projects.insert(name.to_string(), slot.clone());
        Ok(slot)
    }

    pub fn create(&self, name: &str) -> Result<Arc<Project>, ApiError> {
        let dir = self.dir_of(name)?;
        let projects = self.projects.lock().expect("projects lock");
        if projects.contains_key(name) || dir.exists() {
            return Err(ApiError::conflict("exists", format!("project {name:?} already exists")));
        }
        let project = Project::new(name);
        save_project(&project, &dir)?;
        Ok(Arc::new(project))
    }

    pub fn delete(&self, name: &str) -> Result<(), ApiError> {
        let slot = self.slot(name)?;
        let _writer = slot.writer.lock().expect("writer lock");
        if slot.running_job.lock().expect("job lock").is_some() {
            return Err(ApiError::conflict("training", format!("project {name:?} is training")));
        }
        fs::remove_dir_all(&slot.dir).map_err(|e| ApiError::internal(e.to_string()))?;
        self.projects.lock().expect("projects lock").remove(name);
        Ok(())
    }

    pub fn job(&self, id: &str) -> Result<TrainingJob, ApiError> {
        let jobs = self.jobs.lock().expect("jobs lock");
        let job = jobs.get(id).ok_or_else(|| ApiError::not_found(format!("no job {id:?}")))?;
        let snapshot = job.lock().expect("job lock").clone();
        Ok(snapshot)
    }

    /// Registers a queued job for the project, refusing if one is already
    /// in flight. The returned handle is run with [`run_training`].
    pub(crate) fn enqueue_training(&self, slot: &ProjectSlot) -> Result<Arc<Mutex<TrainingJob>>, ApiError> {
        let mut running = slot.running_job.lock().expect("job lock");
        if let Some(id) = running.as_ref() {
            return Err(ApiError::conflict("training", format!("project {:?} is already training", slot.name))
                .with_details(serde_json::json!({ "job_id": id })));
        }
        if !slot.issues.is_empty() {
            return Err(StoreError::Invariant(slot.issues.clone()).into());
        }
        let id = format!("job-{}", self.next_job.fetch_add(1, Ordering::Relaxed));
        let job = Arc::new(Mutex::new(TrainingJob {
            job_id: id.clone(),
            project: slot.name.clone(),
            state: JobState::Queued,
            completed_epochs: 0,
            total_epochs: slot.snapshot().training_config.epochs,
            metrics: Vec::new(),
            error: None,
        }));
        self.jobs.lock().expect("jobs lock").insert(id.clone(), job.clone());
        *running = Some(id);
        Ok(job)
    }
}

/// Trains on the snapshot current at start and publishes the model on success.
/// Blocks; run it off the async workers.
pub(crate) fn run_training(slot: &ProjectSlot, job: &Mutex<TrainingJob>, epoch_delay: Duration) {
    let base = slot.snapshot();
    job.lock().expect("job lock").state = JobState::Running;
    let result = intent::train_with_progress(base.dataset(), &base.training_config, |m| {
        {
            let mut j = job.lock().expect("job lock");
            j.completed_epochs = m.epoch;
            j.metrics.push(m.clone());
        }
        if !epoch_delay.is_zero() {
            std::thread::sleep(epoch_delay);
        }
    });
    let outcome = result.map_err(|e| e.to_string()).and_then(|model| {
        slot.mutate(|p| {
            p.install_model(model, base.dataset());
            Ok(())
        })
        .map(|_| ())
        .map_err(|e| e.message)
    });
    // free the slot first so a client that sees the terminal state can start again
    *slot.running_job.lock().expect("job lock") = None;
    let mut j = job.lock().expect("job lock");
    match outcome {
            Ok(()) => j.state = JobState::Succeeded,
            Err(message) => {
                tracing::warn!(job = %j.job_id, %message, "training failed");
                j.state = JobState::Failed;
                j.error = Some(message);
            }
        }
}
