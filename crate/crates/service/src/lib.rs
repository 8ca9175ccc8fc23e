//! HTTP JSON API over classbot projects.
//!
//! Every route lives under `/v1`. Projects are directories below the data
//! root; requests read an immutable snapshot of the project, so a chat turn
//! that starts before a training job finishes is answered entirely by the
//! model that was current when it started. Training runs as a background job
//! that clients poll at `/v1/jobs/{id}`.
//!
//! There is no authentication. Run it on a trusted network only.

mod error;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use classbot::augmentation::{augment_dataset, AugmentationConfig};
use classbot::clients::{generative_client, translation_client};
use classbot::dataset::{self, DatasetFile};
use classbot::intent::TrainingConfig;
use classbot::pipeline::{PipelineConfig, QaEngines, QaMode};
use classbot::policy::PolicyRule;
use classbot::project::{bundled_suite, Project, BUNDLED_SUITES};
use serde::Deserialize;
use serde_json::{json, Value};

use error::Body;
pub use error::ApiError;
pub use state::{valid_project_name, AppState, JobState, ServiceConfig, TrainingJob};

/// One row of the API surface and the CLI command that does the same thing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApiRoute {
    pub method: &'static str,
    pub path: &'static str,
    pub cli: &'static str,
}

const fn route(method: &'static str, path: &'static str, cli: &'static str) -> ApiRoute {
    ApiRoute { method, path, cli }
}

pub const ROUTES: &[ApiRoute] = &[
    route("GET", "/v1/health", "serve"),
    route("GET", "/v1/projects", "list"),
    route("POST", "/v1/projects", "init"),
    route("GET", "/v1/projects/{name}", "show"),
    route("DELETE", "/v1/projects/{name}", "delete"),
    route("GET", "/v1/projects/{name}/dataset", "export"),
    route("PUT", "/v1/projects/{name}/dataset", "import"),
    route("GET", "/v1/projects/{name}/dataset/{part}", "export"),
    route("PUT", "/v1/projects/{name}/dataset/{part}", "import"),
    route("POST", "/v1/projects/{name}/import", "import"),
    route("GET", "/v1/projects/{name}/validate", "validate"),
    route("POST", "/v1/projects/{name}/augment", "augment"),
    route("GET", "/v1/projects/{name}/rules", "rules"),
    route("PUT", "/v1/projects/{name}/rules", "rules"),
    route("GET", "/v1/projects/{name}/config", "config"),
    route("PUT", "/v1/projects/{name}/config", "config"),
    route("POST", "/v1/projects/{name}/train", "train"),
    route("GET", "/v1/jobs/{id}", "train"),
    route("POST", "/v1/projects/{name}/eval", "eval"),
    route("POST", "/v1/projects/{name}/chat", "ask"),
    route("POST", "/v1/projects/{name}/compare", "compare"),
    route("GET", "/v1/projects/{name}/steps", "steps"),
    route("POST", "/v1/projects/{name}/steps/{step}", "steps"),
];

type Shared = Arc<AppState>;
type ApiResult = Result<(StatusCode, Json<Value>), ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/v1/projects", get(list_projects).post(create_project))
        .route("/v1/projects/{name}", get(show_project).delete(delete_project))
        .route("/v1/projects/{name}/dataset", get(get_dataset).put(put_dataset))
        .route("/v1/projects/{name}/dataset/{part}", get(get_part).put(put_part))
        .route("/v1/projects/{name}/import", post(import_suite))
        .route("/v1/projects/{name}/validate", get(validate))
        .route("/v1/projects/{name}/augment", post(augment))
        .route("/v1/projects/{name}/rules", get(get_rules).put(put_rules))
        .route("/v1/projects/{name}/config", get(get_config).put(put_config))
        .route("/v1/projects/{name}/train", post(start_training))
        .route("/v1/jobs/{id}", get(get_job))
        .route("/v1/projects/{name}/eval", post(evaluate))
        .route("/v1/projects/{name}/chat", post(chat))
        .route("/v1/projects/{name}/compare", post(compare))
        .route("/v1/projects/{name}/steps", get(get_steps))
        .route("/v1/projects/{name}/steps/{step}", post(complete_step))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, root = %state.config.data_root.display(), "serving /v1");
    axum::serve(listener, router(state)).await
}

/// Runs `f` on the blocking pool. Disk IO, training and the blocking model
/// clients all happen there.
async fn blocking<T: serde::Serialize + Send + 'static>(
    state: Shared,
    status: StatusCode,
    f: impl FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
) -> ApiResult {
    let out = tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))??;
    let body = serde_json::to_value(out).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((status, Json(body)))
}

fn summary(project: &Project, issues: &[String]) -> Value {
    let ds = project.dataset();
    json!({
        "name": project.name,
        "read_only": !issues.is_empty(),
        "issues": issues,
        "intents": ds.intent_names(),
        "questions": ds.questions.len(),
        "human_questions": ds.human_questions().count(),
        "has_model": project.model().is_some(),
        "stale": project.is_stale(),
        "chat_turns": project.chat_turns(),
        "rules": project.rules().len(),
        "steps": project.step_status(),
        "validation": project.validate(),
    })
}

fn dataset_document(project: &Project) -> Value {
    let ds = project.dataset();
    json!({
        "dataset": ds,
        "files": {
            "intents": dataset::serialize_intents(ds),
            "contexts": dataset::serialize_contexts(ds),
            "questions": dataset::serialize_questions(ds),
        },
        "validation": project.validate(),
        "lint": dataset::lint(ds),
    })
}

#[derive(Deserialize)]
struct CreateProject {
    name: String,
}

async fn list_projects(State(state): State<Shared>) -> ApiResult {
    blocking(state, StatusCode::OK, |s| Ok(json!({ "projects": s.list()? }))).await
}

async fn create_project(State(state): State<Shared>, Body(body): Body<CreateProject>) -> ApiResult {
    blocking(state, StatusCode::CREATED, move |s| Ok(summary(&*s.create(&body.name)?, &[]))).await
}

async fn show_project(State(state): State<Shared>, Path(name): Path<String>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let slot = s.slot(&name)?;
        Ok(summary(&slot.snapshot(), &slot.issues))
    })
    .await
}

async fn delete_project(State(state): State<Shared>, Path(name): Path<String>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        s.delete(&name)?;
        Ok(json!({ "deleted": name }))
    })
    .await
}

async fn get_dataset(State(state): State<Shared>, Path(name): Path<String>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| Ok(dataset_document(&s.slot(&name)?.snapshot()))).await
}

#[derive(Deserialize)]
struct DatasetFiles {
    intents: String,
    contexts: String,
    questions: String,
}

async fn put_dataset(State(state): State<Shared>, Path(name): Path<String>, Body(files): Body<DatasetFiles>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let parsed = dataset::parse_dataset(&files.intents, &files.contexts, &files.questions).map_err(|e| ApiError::parse_errors(&e))?;
        let (_, project) = s.slot(&name)?.mutate(|p| Ok(p.set_dataset(&parsed)?))?;
        Ok(dataset_document(&project))
    })
    .await
}

fn part_of(part: &str) -> Result<DatasetFile, ApiError> {
    match part {
        "intents" => Ok(DatasetFile::Intents),
        "contexts" => Ok(DatasetFile::Contexts),
        "questions" => Ok(DatasetFile::Questions),
        other => Err(ApiError::not_found(format!(
            "no dataset part {other:?}; use intents, contexts or questions"
        ))),
    }
}

async fn get_part(State(state): State<Shared>, Path((name, part)): Path<(String, String)>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let file = part_of(&part)?;
        let project = s.slot(&name)?.snapshot();
        let ds = project.dataset();
        let content = match file {
            DatasetFile::Intents => dataset::serialize_intents(ds),
            DatasetFile::Contexts => dataset::serialize_contexts(ds),
            DatasetFile::Questions => dataset::serialize_questions(ds),
        };
        Ok(json!({ "part": part, "content": content }))
    })
    .await
}

#[derive(Deserialize)]
struct PartBody {
    content: String,
}

async fn put_part(
    State(state): State<Shared>,
    Path((name, part)): Path<(String, String)>,
    Body(body): Body<PartBody>,
) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let file = part_of(&part)?;
        let slot = s.slot(&name)?;
        let (_, project) = slot.mutate(|p| Ok(p.replace_file(file, &body.content)?))?;
        Ok(dataset_document(&project))
    })
    .await
}

#[derive(Deserialize)]
struct ImportBody {
    suite: String,
}

async fn import_suite(State(state): State<Shared>, Path(name): Path<String>, Body(body): Body<ImportBody>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let suite = bundled_suite(&body.suite)
            .map_err(|e| ApiError::not_found(e.to_string()).with_details(json!({ "suites": BUNDLED_SUITES })))?;
        let (_, project) = s.slot(&name)?.mutate(|p| Ok(p.import_suite(&suite)?))?;
        Ok(dataset_document(&project))
    })
    .await
}

async fn validate(State(state): State<Shared>, Path(name): Path<String>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let project = s.slot(&name)?.snapshot();
        Ok(json!({ "validation": project.validate(), "lint": dataset::lint(project.dataset()) }))
    })
    .await
}

async fn augment(State(state): State<Shared>, Path(name): Path<String>, body: Option<Body<AugmentationConfig>>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let client = translation_client(&s.config.translation, s.config.client_timeout);
        let (report, project) = s.slot(&name)?.mutate(|p| {
            if let Some(Body(config)) = body {
                p.set_augmentation_config(config)?;
            }
            let (out, report) = augment_dataset(p.dataset(), &p.augmentation_config, client.as_ref())
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "augmentation_failed", e.to_string()))?;
            p.set_dataset(&out)?;
            Ok(report)
        })?;
        Ok(json!({ "report": report, "generated": report.generated(), "dropped": report.dropped(), "validation": project.validate() }))
    })
    .await
}

async fn get_rules(State(state): State<Shared>, Path(name): Path<String>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| Ok(json!({ "rules": s.slot(&name)?.snapshot().rules() }))).await
}

async fn put_rules(State(state): State<Shared>, Path(name): Path<String>, Body(rules): Body<Vec<PolicyRule>>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let (_, project) = s.slot(&name)?.mutate(|p| Ok(p.set_rules(rules)?))?;
        Ok(json!({ "rules": project.rules(), "validation": project.validate() }))
    })
    .await
}

#[derive(Deserialize, Default)]
struct ConfigPatch {
    pipeline: Option<PipelineConfig>,
    augmentation: Option<AugmentationConfig>,
    training: Option<TrainingConfig>,
}

fn config_document(project: &Project) -> Value {
    json!({
        "pipeline": project.pipeline_config,
        "augmentation": project.augmentation_config,
        "training": project.training_config,
    })
}

async fn get_config(State(state): State<Shared>, Path(name): Path<String>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| Ok(config_document(&s.slot(&name)?.snapshot()))).await
}

async fn put_config(State(state): State<Shared>, Path(name): Path<String>, Body(patch): Body<ConfigPatch>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let (_, project) = s.slot(&name)?.mutate(|p| {
            if let Some(c) = patch.pipeline {
                p.set_pipeline_config(c)?;
            }
            if let Some(c) = patch.augmentation {
                p.set_augmentation_config(c)?;
            }
            if let Some(c) = patch.training {
                p.set_training_config(c)?;
            }
            Ok(())
        })?;
        Ok(config_document(&project))
    })
    .await
}

/// Optional body replaces the project's training config before the job starts.
async fn start_training(State(state): State<Shared>, Path(name): Path<String>, body: Option<Body<TrainingConfig>>) -> ApiResult {
    let runner = state.clone();
    let (slot, job) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let slot = runner.slot(&name)?;
        if let Some(Body(config)) = body {
            if config != slot.snapshot().training_config {
                slot.mutate(|p| Ok(p.set_training_config(config)?))?;
            }
        }
        let job = runner.enqueue_training(&slot)?;
        Ok((slot, job))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let queued = job.lock().expect("job lock").clone();
    let delay = state.config.epoch_delay;
    tokio::task::spawn_blocking(move || state::run_training(&slot, &job, delay));
    Ok((StatusCode::ACCEPTED, Json(serde_json::to_value(queued).expect("job serializes"))))
}

async fn get_job(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let job = state.job(&id)?;
    Ok((StatusCode::OK, Json(serde_json::to_value(job).expect("job serializes"))))
}

#[derive(Deserialize)]
#[serde(default)]
struct EvalBody {
    train_fraction: f64,
    seed: u64,
}

impl Default for EvalBody {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 1,
        }
    }
}

async fn evaluate(State(state): State<Shared>, Path(name): Path<String>, body: Option<Body<EvalBody>>) -> ApiResult {
    let body = body.map(|Body(b)| b).unwrap_or_default();
    blocking(state, StatusCode::OK, move |s| {
        Ok(s.slot(&name)?.snapshot().evaluate_split(body.train_fraction, body.seed)?)
    })
    .await
}

#[derive(Deserialize)]
struct ChatBody {
    question: String,
    #[serde(default)]
    mode: Option<QaMode>,
}

async fn chat(State(state): State<Shared>, Path(name): Path<String>, Body(body): Body<ChatBody>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let slot = s.slot(&name)?;
        let project = slot.snapshot();
        let generative = generative_client(&s.config.generative, s.config.client_timeout);
        let engines = QaEngines {
            generative: generative.as_ref(),
        };
        let response = project.answer(&body.question, body.mode, engines)?;
        if let Err(e) = slot.mutate(|p| {
            p.record_chat_turn();
            Ok(())
        }) {
            tracing::warn!(project = %name, error = %e.message, "chat turn not recorded");
        }
        Ok(response)
    })
    .await
}

#[derive(Deserialize)]
struct CompareBody {
    question: String,
}

async fn compare(State(state): State<Shared>, Path(name): Path<String>, Body(body): Body<CompareBody>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let project = s.slot(&name)?.snapshot();
        let generative = generative_client(&s.config.generative, s.config.client_timeout);
        let engines = QaEngines {
            generative: generative.as_ref(),
        };
        Ok(project.compare(&body.question, engines)?)
    })
    .await
}

async fn get_steps(State(state): State<Shared>, Path(name): Path<String>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| Ok(json!({ "steps": s.slot(&name)?.snapshot().step_status() }))).await
}

async fn complete_step(State(state): State<Shared>, Path((name, step)): Path<(String, u8)>) -> ApiResult {
    blocking(state, StatusCode::OK, move |s| {
        let (_, project) = s.slot(&name)?.mutate(|p| Ok(p.complete_step(step)?))?;
        Ok(json!({ "steps": project.step_status() }))
    })
    .await
}
