//! Request handlers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use kanmat_core::dataset::{read_csv_from, CsvOptions, TransformSpec};
use kanmat_core::matrix::{compute as compute_matrix, MatrixConfig, MatrixKind, MatrixRequest};
use kanmat_core::render::export_json;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::state::{AppState, ComputeKey, Job, JobStatus};

type Shared = State<Arc<AppState>>;

pub const CONFIG_HASH_HEADER: &str = "x-config-hash";

fn body(bytes: Result<Bytes, BytesRejection>) -> Result<Bytes, ApiError> {
    bytes.map_err(|r| {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", r.body_text())
        } else {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
        }
    })
}

fn json_body<T: DeserializeOwned>(
    bytes: Result<Bytes, BytesRejection>,
    code: &'static str,
) -> Result<T, ApiError> {
    let bytes = body(bytes)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        ApiError::unprocessable(code, e.to_string())
            .with_detail(json!({ "line": e.line(), "column": e.column() }))
    })
}

pub async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub async fn upload_dataset(
    State(state): Shared,
    bytes: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let bytes = body(bytes)?;
    let (d, _) = read_csv_from(&bytes[..], CsvOptions::default()).map_err(|e| ApiError::parse(&e))?;
    let info = state.add_dataset(d)?;
    Ok(Json(info).into_response())
}

pub async fn list_datasets(State(state): Shared) -> Response {
    Json(json!({ "datasets": state.datasets() })).into_response()
}

#[derive(Deserialize)]
struct NewSession {
    dataset_id: String,
}

pub async fn create_session(
    State(state): Shared,
    bytes: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let req: NewSession = json_body(bytes, "invalid_request")?;
    Ok(Json(state.create_session(&req.dataset_id)?).into_response())
}

pub async fn get_session(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let view = session.lock().await.view();
    Ok(Json(view).into_response())
}

pub async fn push_transform(
    State(state): Shared,
    Path(id): Path<String>,
    bytes: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let spec: TransformSpec = json_body(bytes, "invalid_transform")?;
    let mut s = session.lock().await;
    s.push(spec).map_err(|e| ApiError::transform(&e))?;
    Ok(Json(s.view()).into_response())
}

pub async fn undo_transform(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    match s.undo() {
        Ok(true) => Ok(Json(s.view()).into_response()),
        Ok(false) => Err(ApiError::new(StatusCode::CONFLICT, "empty_stack", "no transform to undo")),
        Err(e) => Err(ApiError::internal(e.to_string())),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComputeBody {
    kind: MatrixKind,
    #[serde(default)]
    targets: Option<Vec<String>>,
    #[serde(default)]
    excluded_targets: Vec<String>,
    #[serde(default)]
    inputs: Option<Vec<String>>,
    #[serde(default)]
    config: Option<MatrixConfig>,
    #[serde(default, rename = "async")]
    run_async: bool,
}

fn with_hash(mut resp: Response, hash: &str) -> Response {
    if let Ok(v) = HeaderValue::from_str(hash) {
        resp.headers_mut().insert(CONFIG_HASH_HEADER, v);
    }
    resp
}

fn matrix_response(body: &str, hash: &str) -> Response {
    let resp = (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body.to_string(),
    )
        .into_response();
    with_hash(resp, hash)
}

pub async fn compute(
    State(state): Shared,
    Path(id): Path<String>,
    bytes: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let req: ComputeBody = json_body(bytes, "invalid_config")?;
    let key = ComputeKey {
        kind: req.kind,
        request: MatrixRequest {
            targets: req.targets,
            excluded_targets: req.excluded_targets,
            inputs: req.inputs,
        },
        config: req.config.unwrap_or_default(),
    };
    key.config.validate().map_err(|e| ApiError::matrix(&e))?;
    let config_hash = key.config_hash();

    let (dataset, cache_key) = {
        let s = session.lock().await;
        let cache_key = key.cache_key(&s.stack_hash());
        if let Some(hit) = s.cached(&cache_key) {
            return Ok(matrix_response(&hit, &config_hash));
        }
        (s.current.clone(), cache_key)
    };

    let done = Arc::new(AtomicUsize::new(0));
    let total = Arc::new(AtomicUsize::new(0));
    let job_id = {
        let mut jobs = state.jobs.lock().expect("job lock");
        let running = jobs.values().any(|j| {
            j.session_id == id && j.cache_key == cache_key && j.status == JobStatus::Running
        });
        if running {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "job_running",
                "an identical computation is already running",
            ));
        }
        let job_id = state.new_job_id();
        jobs.insert(
            job_id.clone(),
            Job {
                id: job_id.clone(),
                session_id: id.clone(),
                cache_key: cache_key.clone(),
                config_hash: config_hash.clone(),
                status: JobStatus::Running,
                done: done.clone(),
                total: total.clone(),
                result: None,
                error: None,
            },
        );
        job_id
    };

    let task_state = state.clone();
    let task_job = job_id.clone();
    let handle = tokio::spawn(async move {
        let outcome = tokio::task::spawn_blocking(move || {
            let progress = |d: usize, t: usize| {
                done.store(d, Ordering::Relaxed);
                total.store(t, Ordering::Relaxed);
            };
            compute_matrix(&dataset, key.kind, &key.request, &key.config, Some(&progress))
                .map(|m| Arc::new(export_json(&m)))
                .map_err(|e| ApiError::matrix(&e))
        })
        .await
        .unwrap_or_else(|e| Err(ApiError::internal(e.to_string())));
        if let Ok(body) = &outcome {
            session.lock().await.store(cache_key, body.clone());
        }
        let mut jobs = task_state.jobs.lock().expect("job lock");
        if let Some(job) = jobs.get_mut(&task_job) {
            match &outcome {
                Ok(body) => {
                    job.status = JobStatus::Done;
                    job.result = Some(body.clone());
                }
                Err(e) => {
                    job.status = JobStatus::Failed;
                    job.error = Some(e.clone());
                }
            }
        }
        outcome
    });

    if req.run_async {
        let resp = (
            StatusCode::ACCEPTED,
            Json(json!({ "job_id": job_id, "session_id": id, "status": JobStatus::Running })),
        )
            .into_response();
        return Ok(with_hash(resp, &config_hash));
    }
    let body = handle.await.map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(matrix_response(&body, &config_hash))
}

pub async fn get_job(
    State(state): Shared,
    Path((id, job_id)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    state.session(&id)?;
    let jobs = state.jobs.lock().expect("job lock");
    let job = jobs
        .get(&job_id)
        .filter(|j| j.session_id == id)
        .ok_or_else(|| ApiError::not_found("job", &job_id))?;
    let mut view = json!({
        "job_id": job.id,
        "session_id": job.session_id,
        "status": job.status,
        "config_hash": job.config_hash,
        "progress": {
            "done": job.done.load(Ordering::Relaxed),
            "total": job.total.load(Ordering::Relaxed),
        },
    });
    if let Some(body) = &job.result {
        let parsed: Value = serde_json::from_str(body).map_err(|e| ApiError::internal(e.to_string()))?;
        view["result"] = parsed;
    }
    if let Some(e) = &job.error {
        view["error"] = json!({ "code": e.code, "message": e.message, "detail": e.detail });
    }
    Ok(with_hash(Json(view).into_response(), &job.config_hash))
}
