//! The `/v1` HTTP API.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use relfeed::corpus::{load_corpus, AttributeFilter, Corpus};
use relfeed::engine::{Algorithm, FeedbackOutcome, SessionStatus};
use relfeed::metrics::convergence_score;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::trace::TraceLayer;

use crate::config::ServiceConfig;
use crate::store::{Counts, SessionRecord, SessionStore};
use crate::{Result, ServiceError};

pub struct AppState {
    pub store: SessionStore,
    pub image_root: PathBuf,
}

impl AppState {
    pub fn new(cfg: &ServiceConfig, corpus: Arc<Corpus>) -> Result<Self> {
        let store = SessionStore::open(corpus, &cfg.data_dir, cfg.engine.clone(), cfg.algorithm, cfg.max_iterations)?;
        Ok(Self {
            store,
            image_root: cfg.image_root.clone(),
        })
    }
}

/// Accepted values for one attribute: a single value or a list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub constraints: BTreeMap<String, OneOrMany>,
    #[serde(default)]
    pub config_overrides: Option<serde_json::Value>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
}

#[derive(Debug, Deserialize)]
pub struct FeedbackRequest {
    pub similar_ids: Vec<String>,
    /// When present, the request is rejected with 409 unless the session is at this iteration.
    #[serde(default)]
    pub iteration: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct ReportRequest {
    pub image_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub id: String,
    pub image_uri: String,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub iteration: usize,
    pub batch: Vec<BatchItem>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub status: SessionStatus,
    pub iteration: usize,
    pub counts: Counts,
    pub last_batch: Vec<BatchItem>,
}

pub fn image_uri(id: &str) -> String {
    format!("/v1/images/{id}")
}

fn items(corpus: &Corpus, ids: &[String]) -> Vec<BatchItem> {
    ids.iter()
        .map(|id| BatchItem {
            id: id.clone(),
            image_uri: image_uri(id),
            attributes: corpus
                .index_of(id)
                .map(|i| corpus.record(i).attributes.clone())
                .unwrap_or_default(),
        })
        .collect()
}

fn snapshot(rec: &SessionRecord) -> Snapshot {
    let s = &rec.session;
    Snapshot {
        status: s.status(),
        iteration: s.iteration(),
        counts: rec.counts(),
        last_batch: items(s.corpus(), &s.batch_ids()),
    }
}

pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    let cors = if cors_origins.is_empty() {
        CorsLayer::new().allow_origin(AllowOrigin::any())
    } else {
        let origins: Vec<HeaderValue> = cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
        CorsLayer::new().allow_origin(origins)
    }
    .allow_methods([Method::GET, Method::POST])
    .allow_headers([header::CONTENT_TYPE]);

    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/feedback", post(post_feedback))
        .route("/v1/sessions/{id}/report", post(post_report))
        .route("/v1/images/{id}", get(get_image))
        .layer(cors)
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Corrupt(format!("worker panicked: {e}")))?
}

fn body<T>(payload: std::result::Result<Json<T>, JsonRejection>) -> Result<T> {
    payload.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    payload: std::result::Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>)> {
    let req = body(payload)?;
    let constraints: AttributeFilter = req
        .constraints
        .into_iter()
        .map(|(k, v)| {
            let vals = match v {
                OneOrMany::One(s) => vec![s],
                OneOrMany::Many(v) => v,
            };
            (k, vals)
        })
        .collect();
    let created = blocking(move || {
        let (id, rec) = state
            .store
            .create(constraints, req.config_overrides.as_ref(), req.seed, req.algorithm)?;
        let rec = rec.lock().expect("session lock");
        tracing::info!(session = %id, algorithm = rec.meta.algorithm.name(), seed = rec.meta.engine.seed, "session created");
        Ok(Created {
            session_id: id,
            iteration: rec.session.iteration(),
            batch: items(rec.session.corpus(), &rec.session.batch_ids()),
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Snapshot>> {
    blocking(move || {
        let rec = state.store.get(&id)?;
        let rec = rec.lock().expect("session lock");
        Ok(Json(snapshot(&rec)))
    })
    .await
}

async fn post_feedback(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: std::result::Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<serde_json::Value>> {
    let req = body(payload)?;
    blocking(move || {
        let rec = state.store.get(&id)?;
        let mut rec = rec.lock().expect("session lock");
        let current = rec.session.iteration();
        if rec.session.status() != SessionStatus::Active {
            return Err(ServiceError::Conflict(rec.session.status().as_str().into()));
        }
        if let Some(sent) = req.iteration.filter(|&s| s != current) {
            return Err(ServiceError::StaleIteration { sent, current });
        }
        let out = match rec.feedback(&req.similar_ids)? {
            FeedbackOutcome::Batch {
                iteration,
                batch,
                trained,
                loss,
            } => {
                let mut v = json!({
                    "iteration": iteration,
                    "batch": items(rec.session.corpus(), &batch),
                    "trained": trained,
                });
                if let Some(l) = loss {
                    v["loss"] = json!(l);
                }
                v
            }
            FeedbackOutcome::Closed(status) => json!({"status": status.as_str()}),
        };
        tracing::info!(session = %id, iteration = rec.session.iteration(), similar = req.similar_ids.len(), "feedback");
        Ok(Json(out))
    })
    .await
}

async fn post_report(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: std::result::Result<Json<ReportRequest>, JsonRejection>,
) -> Result<Json<serde_json::Value>> {
    let req = body(payload)?;
    blocking(move || {
        let rec = state.store.get(&id)?;
        let mut rec = rec.lock().expect("session lock");
        if rec.session.status() != SessionStatus::Active {
            return Err(ServiceError::Conflict(rec.session.status().as_str().into()));
        }
        let n = rec.report(&req.image_id)?;
        let c = convergence_score(n, rec.meta.engine.max_iterations, true);
        tracing::info!(session = %id, iterations = n, "target reported");
        Ok(Json(json!({"status": "converged", "iterations": n, "convergence_score": c})))
    })
    .await
}

const IMAGE_EXTENSIONS: [&str; 7] = ["png", "jpg", "jpeg", "gif", "webp", "bmp", "svg"];

pub fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

/// Reject anything that could escape the image root.
fn is_plain_relative(p: &str) -> bool {
    !p.is_empty()
        && !p.contains('\\')
        && !p.contains('\0')
        && Path::new(p).components().all(|c| matches!(c, Component::Normal(_)))
}

fn image_candidates(root: &Path, corpus: &Corpus, id: &str) -> Result<Vec<PathBuf>> {
    if !is_plain_relative(id) || id.contains('/') {
        return Err(ServiceError::BadRequest(format!("invalid image id {id:?}")));
    }
    let mut out = Vec::new();
    if let Some(rel) = corpus.index_of(id).ok().and_then(|i| corpus.record(i).image_uri.clone()) {
        if is_plain_relative(&rel) {
            out.push(root.join(rel));
        }
    }
    out.push(root.join(id));
    out.extend(IMAGE_EXTENSIONS.iter().map(|ext| root.join(format!("{id}.{ext}"))));
    Ok(out)
}

async fn get_image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response> {
    for path in image_candidates(&state.image_root, state.store.corpus(), &id)? {
        if let Ok(bytes) = tokio::fs::read(&path).await {
            return Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response());
        }
    }
    Err(ServiceError::NotFound(format!("image {id:?}")))
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let msg = self.to_string();
        let (code, extra) = match &self {
            ServiceError::BadRequest(_) | ServiceError::Config(_) => (StatusCode::BAD_REQUEST, json!({})),
            ServiceError::UnknownAttribute(a) => (StatusCode::BAD_REQUEST, json!({"attribute": a})),
            ServiceError::UnknownAttributeValue { attribute, value } => {
                (StatusCode::BAD_REQUEST, json!({"attribute": attribute, "value": value}))
            }
            ServiceError::NoMatches | ServiceError::UnknownSession(_) | ServiceError::NotFound(_) => {
                (StatusCode::NOT_FOUND, json!({}))
            }
            ServiceError::Conflict(s) => (StatusCode::CONFLICT, json!({"status": s})),
            ServiceError::StaleIteration { current, .. } => (StatusCode::CONFLICT, json!({"iteration": current})),
            ServiceError::NotInBatch(ids) => (StatusCode::UNPROCESSABLE_ENTITY, json!({"offenders": ids})),
            ServiceError::Io(..) | ServiceError::Corrupt(_) | ServiceError::Engine(_) => {
                tracing::error!(error = %msg, "request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({}))
            }
        };
        let mut body = extra;
        body["error"] = json!(msg);
        (code, Json(body)).into_response()
    }
}

/// Load the corpus, bind, and serve until interrupted.
pub async fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    let corpus = Arc::new(load_corpus(&cfg.corpus)?);
    tracing::info!(records = corpus.len(), corpus = %cfg.corpus.display(), "corpus loaded");
    let state = Arc::new(AppState::new(&cfg, corpus)?);

    let sweeper = state.clone();
    let idle = Duration::from_secs(cfg.idle_timeout_secs.max(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(idle.min(Duration::from_secs(60)));
        loop {
            tick.tick().await;
            let dropped = sweeper.store.evict_idle(idle);
            if dropped > 0 {
                tracing::info!(dropped, "evicted idle sessions");
            }
        }
    });

    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, &cfg.cors_origins))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
