//! HTTP service over the levers engine.
//!
//! Datasets are uploaded once and then referenced by id from scenario
//! configs, which use the same schema as the CLI's config files (in JSON).
//! Analysis responses are the CLI's result documents, byte for byte. Sweeps
//! larger than [`ServiceConfig::inline_threshold`] cells run as background
//! jobs that clients poll.
//!
//! | method | path                  | body                          |
//! |--------|-----------------------|-------------------------------|
//! | GET    | `/health`             |                               |
//! | POST   | `/datasets`           | `{"csv": "...", "schema": {..}}` |
//! | GET    | `/datasets/{id}`      |                               |
//! | POST   | `/evaluate`           | scenario config               |
//! | POST   | `/curve`              | scenario config               |
//! | POST   | `/break-even`         | scenario config               |
//! | POST   | `/equivalent-cost`    | scenario config               |
//! | POST   | `/ratio-grid`         | scenario config               |
//! | POST   | `/optimize`           | scenario config               |
//! | GET    | `/jobs/{id}`          |                               |
//! | GET    | `/jobs/{id}/result`   |                               |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path as FsPath;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use levers_core::config::ScenarioConfig;
use levers_core::population::{load_population, Schema};
use levers_core::report::{sha256_hex, ResultDocument};
use levers_core::{Error, ErrorClass, Population, ENGINE_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceConfig {
    /// Analyses with more cells than this run as background jobs.
    pub inline_threshold: usize,
    /// Sweep worker threads per analysis (0 = all cores).
    pub workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            inline_threshold: 2000,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub n: usize,
    pub labeled: usize,
    pub label_share: f64,
    pub outcome: OutcomeStats,
    pub covariates: Vec<String>,
    pub groups: Vec<String>,
    /// SHA-256 of the uploaded file.
    pub content_hash: String,
}

fn summarize(id: &str, pop: &Population, content_hash: String) -> DatasetSummary {
    let w = pop.outcomes();
    let mean = pop.mean_outcome();
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
    DatasetSummary {
        id: id.to_string(),
        n: pop.len(),
        labeled: pop.labeled_count(),
        label_share: pop.label_share(),
        outcome: OutcomeStats {
            mean,
            sd: var.sqrt(),
            min: w.iter().copied().fold(f64::INFINITY, f64::min),
            max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        },
        covariates: pop.covariate_names().to_vec(),
        groups: pop.group_names().to_vec(),
        content_hash,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone)]
struct Job {
    status: JobStatus,
    config_hash: String,
    result: Option<Arc<String>>,
    error: Option<Value>,
}

struct Dataset {
    population: Population,
    summary: DatasetSummary,
}

/// Shared service state: immutable datasets, a result cache keyed by config
/// hash, and the job table.
pub struct AppState {
    config: ServiceConfig,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    cache: Mutex<HashMap<String, Arc<String>>>,
    jobs: Mutex<HashMap<String, Job>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            config,
            datasets: RwLock::new(HashMap::new()),
            cache: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }
}

/// A structured error response.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("unknown {what} `{id}`"))
    }

    /// Ingestion problems are 400; everything the engine rejects after
    /// parsing is 422.
    fn engine(e: Error, ingest: bool) -> Self {
        let status = if ingest || e.class() == ErrorClass::Data {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::UNPROCESSABLE_ENTITY
        };
        let mut body = json!({ "error": e.kind(), "message": e.to_string() });
        if let Error::Config { path, .. } = &e {
            body["path"] = json!(path);
        }
        ApiError { status, body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.to_string()))
}

fn document(body: Arc<String>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body.as_str().to_owned()).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload))
        .route("/datasets/{id}", get(dataset_summary))
        .route("/evaluate", post(|s, b| analysis(s, b, "evaluate")))
        .route("/curve", post(|s, b| analysis(s, b, "curve")))
        .route("/break-even", post(|s, b| analysis(s, b, "break_even")))
        .route("/equivalent-cost", post(|s, b| analysis(s, b, "equivalent_cost")))
        .route("/ratio-grid", post(|s, b| analysis(s, b, "ratio_grid")))
        .route("/optimize", post(|s, b| analysis(s, b, "optimize_budget")))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/result", get(job_result))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(config))).await
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "engine_version": ENGINE_VERSION }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Upload {
    csv: String,
    schema: Schema,
}

async fn upload(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<DatasetSummary>> {
    let up: Upload = parse_json(&body)?;
    let content_hash = sha256_hex(up.csv.as_bytes());
    let population = tokio::task::spawn_blocking(move || load_population(up.csv.as_bytes(), &up.schema))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(|e| ApiError::engine(e, true))?;
    let id = state.fresh_id("ds");
    let summary = summarize(&id, &population, content_hash);
    state.datasets.write().expect("dataset lock").insert(
        id,
        Arc::new(Dataset {
            population,
            summary: summary.clone(),
        }),
    );
    Ok(Json(summary))
}

async fn dataset_summary(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<DatasetSummary>> {
    let ds = state.datasets.read().expect("dataset lock").get(&id).cloned();
    ds.map(|d| Json(d.summary.clone()))
        .ok_or_else(|| ApiError::not_found("dataset", &id))
}

fn population_for(state: &AppState, cfg: &ScenarioConfig) -> ApiResult<Population> {
    if let Some(id) = &cfg.dataset.id {
        let ds = state.datasets.read().expect("dataset lock").get(id).cloned();
        return ds
            .map(|d| d.population.clone())
            .ok_or_else(|| ApiError::not_found("dataset", id));
    }
    if cfg.dataset.path.is_some() {
        return Err(ApiError::engine(
            Error::config("dataset.path", "upload the file and reference it by `id`"),
            false,
        ));
    }
    cfg.population(FsPath::new("")).map_err(|e| ApiError::engine(e, false))
}

fn compute(state: &AppState, cfg: &ScenarioConfig, pop: Population) -> Result<Arc<String>, Error> {
    let hash = cfg.hash();
    let resolved = cfg.resolve(pop)?;
    let result = resolved.run(state.config.workers)?;
    let doc = Arc::new(ResultDocument::new(&hash, cfg.policy.seed, result).to_json());
    state.cache.lock().expect("cache lock").insert(hash, doc.clone());
    Ok(doc)
}

async fn analysis(State(state): State<Arc<AppState>>, body: Bytes, expected: &'static str) -> ApiResult<Response> {
    let mut value: Value = parse_json(&body)?;
    if expected == "evaluate" && value.get("analysis").is_none() {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("analysis".into(), json!({ "kind": "evaluate" }));
        }
    }
    let cfg = ScenarioConfig::from_json_value(value).map_err(|e| ApiError::engine(e, false))?;
    if cfg.analysis.name() != expected {
        return Err(ApiError::engine(
            Error::config(
                "analysis.kind",
                format!(
                    "this endpoint runs `{expected}`, config asks for `{}`",
                    cfg.analysis.name()
                ),
            ),
            false,
        ));
    }
    let hash = cfg.hash();
    if let Some(doc) = state.cache.lock().expect("cache lock").get(&hash).cloned() {
        return Ok(document(doc));
    }
    let pop = population_for(&state, &cfg)?;

    if cfg.analysis.cell_count() <= state.config.inline_threshold {
        let st = state.clone();
        let doc = tokio::task::spawn_blocking(move || compute(&st, &cfg, pop))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
            .map_err(|e| ApiError::engine(e, false))?;
        return Ok(document(doc));
    }

    // validate references before accepting the job
    cfg.resolve(pop.clone()).map_err(|e| ApiError::engine(e, false))?;
    let id = state.fresh_id("job");
    state.jobs.lock().expect("job lock").insert(
        id.clone(),
        Job {
            status: JobStatus::Pending,
            config_hash: hash,
            result: None,
            error: None,
        },
    );
    let st = state.clone();
    let job_id = id.clone();
    tokio::spawn(async move {
        let set = |f: &dyn Fn(&mut Job)| {
            if let Some(j) = st.jobs.lock().expect("job lock").get_mut(&job_id) {
                f(j);
            }
        };
        set(&|j| j.status = JobStatus::Running);
        let st2 = st.clone();
        let outcome = tokio::task::spawn_blocking(move || compute(&st2, &cfg, pop)).await;
        match outcome {
            Ok(Ok(doc)) => set(&|j| {
                j.status = JobStatus::Done;
                j.result = Some(doc.clone());
            }),
            Ok(Err(e)) => {
                let body = ApiError::engine(e, false).body;
                set(&|j| {
                    j.status = JobStatus::Failed;
                    j.error = Some(body.clone());
                })
            }
            Err(e) => {
                let body = json!({ "error": "Internal", "message": e.to_string() });
                set(&|j| {
                    j.status = JobStatus::Failed;
                    j.error = Some(body.clone());
                })
            }
        }
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "job_id": id, "status": JobStatus::Pending })),
    )
        .into_response())
}

async fn job_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = state.jobs.lock().expect("job lock").get(&id).cloned();
    let job = job.ok_or_else(|| ApiError::not_found("job", &id))?;
    let mut body = json!({ "job_id": id, "status": job.status, "config_hash": job.config_hash });
    if let Some(doc) = &job.result {
        body["result"] = serde_json::from_str(doc).expect("stored documents are JSON");
    }
    if let Some(err) = job.error {
        body["error"] = err;
    }
    Ok(Json(body))
}

/// The finished job's result document, byte-identical to the CLI's.
async fn job_result(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = state.jobs.lock().expect("job lock").get(&id).cloned();
    let job = job.ok_or_else(|| ApiError::not_found("job", &id))?;
    match job.result {
        Some(doc) => Ok(document(doc)),
        None => Err(ApiError::new(
            StatusCode::CONFLICT,
            "NotReady",
            format!("job `{id}` is {:?}", job.status).to_lowercase(),
        )),
    }
}
