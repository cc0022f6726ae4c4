//! HTTP session service under `/api/v1`.
//!
//! Sessions live in memory. Each session sits behind its own mutex so its
//! mutations are strictly ordered; heavy work runs on the blocking pool.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context as _;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ilc2d::boxes::{Candidate, PruneMode, Rect};
use ilc2d::dataset::ClassId;
use ilc2d::eval::{evaluate, SplitName};
use ilc2d::explain::{explain_local, ExplanationRequest};
use ilc2d::projection::Polyline2D;
use ilc2d::session::{Action, Session, Status};
use ilc2d::Error as CoreError;

use crate::config::SessionArgs;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Required bearer token, if any.
    pub token: Option<String>,
    /// Directory receiving one append-only action log per session.
    pub log_dir: Option<PathBuf>,
}

impl ServiceConfig {
    /// Reads `ILC2D_TOKEN` and `ILC2D_LOG_DIR`.
    pub fn from_env() -> Self {
        ServiceConfig {
            token: std::env::var("ILC2D_TOKEN").ok().filter(|t| !t.is_empty()),
            log_dir: std::env::var("ILC2D_LOG_DIR").ok().map(PathBuf::from),
        }
    }
}

type Shared = Arc<Mutex<Session>>;

#[derive(Default)]
pub struct AppState {
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Shared>>,
    next_id: AtomicU64,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("no session {id}"),
        )
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let (status, kind) = match &e {
            CoreError::StaleDigest { .. } => (StatusCode::CONFLICT, "stale_digest"),
            CoreError::Io { .. } | CoreError::Json(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<CoreError>() {
            Ok(core) => core.into(),
            Err(e) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "validation",
                format!("{e:#}"),
            ),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub id: String,
    pub digest: String,
    pub status: Status,
    pub cases: usize,
    pub class_names: Vec<String>,
    pub remaining: usize,
    pub remaining_per_class: Vec<usize>,
    pub rules: usize,
    pub actions: usize,
}

fn summary(id: &str, s: &Session) -> Summary {
    Summary {
        id: id.to_string(),
        digest: s.digest(),
        status: s.status,
        cases: s.polylines.len(),
        class_names: s
            .config
            .dataset
            .classes
            .iter()
            .map(|c| c.name.clone())
            .collect(),
        remaining: s.remaining().len(),
        remaining_per_class: s.remaining_per_class(),
        rules: s.ruleset().rules.len(),
        actions: s.log.len(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MutationResponse {
    pub digest: String,
    pub outcome: ilc2d::session::Outcome,
    pub session: Summary,
}

#[derive(Debug, Default, Deserialize)]
pub struct Guarded<T> {
    /// Digest the client last saw; a mismatch is rejected with 409.
    pub digest: Option<String>,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Default, Deserialize)]
pub struct AcceptBody {
    /// Box to accept; the best grid candidate when absent.
    pub rect: Option<Rect>,
    pub class: Option<ClassId>,
}

#[derive(Debug, Deserialize)]
pub struct PruneBody {
    pub min_cases: usize,
    #[serde(flatten)]
    pub mode: PruneMode,
}

#[derive(Debug, Default, Deserialize)]
pub struct Empty {}

#[derive(Debug, Deserialize)]
pub struct ProjectionQuery {
    /// Keep at most this many polylines, evenly spaced over the cases.
    pub max_polylines: Option<usize>,
    /// Fetch the exact polyline of one case.
    pub case: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectedCase {
    pub case: usize,
    pub polyline: Polyline2D,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectionResponse {
    pub total: usize,
    pub decimated: bool,
    pub polylines: Vec<ProjectedCase>,
}

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        config,
        ..AppState::default()
    });
    Router::new()
        .route(
            "/api/v1/health",
            get(|| async { Json(json!({ "status": "ok" })) }),
        )
        .route("/api/v1/sessions", post(create_session))
        .route(
            "/api/v1/sessions/{id}",
            get(get_session).delete(delete_session),
        )
        .route("/api/v1/sessions/{id}/projection", get(projection))
        .route("/api/v1/sessions/{id}/candidates", get(candidates))
        .route("/api/v1/sessions/{id}/accept", post(accept))
        .route("/api/v1/sessions/{id}/undo", post(undo))
        .route("/api/v1/sessions/{id}/prune", post(prune))
        .route("/api/v1/sessions/{id}/join", post(join))
        .route("/api/v1/sessions/{id}/rules", get(rules))
        .route("/api/v1/sessions/{id}/rules/export", get(export_rules))
        .route("/api/v1/sessions/{id}/log", get(action_log))
        .route("/api/v1/sessions/{id}/evaluate", post(evaluate_session))
        .route("/api/v1/sessions/{id}/explain", post(explain))
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

async fn authorize(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.config.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

fn lookup(state: &AppState, id: &str) -> Result<Shared, ApiError> {
    state
        .sessions
        .read()
        .expect("session map lock")
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(id))
}

/// Runs `f` on the locked session on the blocking pool.
async fn with_session<T, F>(state: &AppState, id: &str, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> Result<T, ApiError> + Send + 'static,
{
    let shared = lookup(state, id)?;
    tokio::task::spawn_blocking(move || {
        let mut s = shared.lock().map_err(|_| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                "session lock poisoned",
            )
        })?;
        f(&mut s)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(args): Json<SessionArgs>,
) -> Result<(StatusCode, Json<Summary>), ApiError> {
    let session = tokio::task::spawn_blocking(move || -> anyhow::Result<Session> {
        Ok(Session::new(args.session_config()?)?)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed) + 1);
    let body = summary(&id, &session);
    state
        .sessions
        .write()
        .expect("session map lock")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Summary> {
    let sid = id.clone();
    with_session(&state, &id, move |s| Ok(Json(summary(&sid, s)))).await
}

async fn delete_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    match state
        .sessions
        .write()
        .expect("session map lock")
        .remove(&id)
    {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

async fn projection(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ProjectionQuery>,
) -> ApiResult<ProjectionResponse> {
    with_session(&state, &id, move |s| {
        let total = s.polylines.len();
        let picked: Vec<usize> = match (q.case, q.max_polylines) {
            (Some(c), _) if c >= total => {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    "not_found",
                    format!("no case {c}"),
                ));
            }
            (Some(c), _) => vec![c],
            (None, Some(m)) if m > 0 && m < total => (0..m).map(|k| k * total / m).collect(),
            _ => (0..total).collect(),
        };
        Ok(Json(ProjectionResponse {
            total,
            decimated: q.case.is_none() && picked.len() < total,
            polylines: picked
                .into_iter()
                .map(|case| ProjectedCase {
                    case,
                    polyline: s.polylines[case].clone(),
                })
                .collect(),
        }))
    })
    .await
}

async fn candidates(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Value> {
    with_session(&state, &id, |s| {
        let ranked: Vec<Vec<Candidate>> = s.candidates()?;
        Ok(Json(
            json!({ "digest": s.digest(), "status": s.status, "candidates": ranked }),
        ))
    })
    .await
}

fn append_log(state: &AppState, id: &str, action: &Action) -> Result<(), ApiError> {
    let Some(dir) = &state.config.log_dir else {
        return Ok(());
    };
    let write = || -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{id}.jsonl"));
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        writeln!(f, "{}", serde_json::to_string(action)?)?;
        Ok(())
    };
    write().map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            format!("{e:#}"),
        )
    })
}

async fn mutate(
    state: Arc<AppState>,
    id: String,
    digest: Option<String>,
    action: Action,
) -> ApiResult<MutationResponse> {
    let st = state.clone();
    with_session(&state, &id.clone(), move |s| {
        let outcome = s.apply_checked(action.clone(), digest.as_deref())?;
        append_log(&st, &id, &action)?;
        Ok(Json(MutationResponse {
            digest: s.digest(),
            outcome,
            session: summary(&id, s),
        }))
    })
    .await
}

async fn accept(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<Guarded<AcceptBody>>,
) -> ApiResult<MutationResponse> {
    let action = match req.body.rect {
        Some(rect) => {
            rect.check()?;
            Action::Accept {
                rect,
                class: req.body.class,
            }
        }
        None => Action::AcceptTop {
            class: req.body.class,
        },
    };
    mutate(state, id, req.digest, action).await
}

async fn undo(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<Guarded<Empty>>,
) -> ApiResult<MutationResponse> {
    mutate(state, id, req.digest, Action::Undo).await
}

async fn prune(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<Guarded<PruneBody>>,
) -> ApiResult<MutationResponse> {
    let action = Action::Prune {
        min_cases: req.body.min_cases,
        mode: req.body.mode,
    };
    mutate(state, id, req.digest, action).await
}

async fn join(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<Guarded<Empty>>,
) -> ApiResult<MutationResponse> {
    mutate(state, id, req.digest, Action::Join).await
}

async fn rules(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Value> {
    with_session(&state, &id, |s| {
        let rs = s.ruleset();
        Ok(Json(json!({
            "digest": s.digest(),
            "ruleset": rs,
            "text": rs.render_text(),
            "boxes": rs.render_boxes(),
        })))
    })
    .await
}

/// The rule file exactly as `fit` writes it.
async fn export_rules(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let text = with_session(&state, &id, |s| Ok(s.ruleset().to_json()?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn action_log(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let text = with_session(&state, &id, |s| Ok(s.log_jsonl()?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn evaluate_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Value> {
    with_session(&state, &id, |s| {
        let report = evaluate(s.ruleset(), &s.config.dataset, SplitName::Train, None)?;
        Ok(Json(json!({ "digest": s.digest(), "report": report })))
    })
    .await
}

async fn explain(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ExplanationRequest>,
) -> ApiResult<Value> {
    with_session(&state, &id, move |s| {
        let e = explain_local(&req, s.ruleset(), &s.config.dataset, &s.config.spec)?;
        Ok(Json(json!({ "digest": s.digest(), "explanation": e })))
    })
    .await
}

/// Bind address: `bind`, then `ILC2D_BIND`, then [`DEFAULT_BIND`].
pub fn bind_address(bind: Option<String>) -> String {
    bind.or_else(|| std::env::var("ILC2D_BIND").ok().filter(|b| !b.is_empty()))
        .unwrap_or_else(|| DEFAULT_BIND.to_string())
}

pub fn serve_blocking(bind: Option<String>) -> anyhow::Result<()> {
    let addr = bind_address(bind);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(ServiceConfig::from_env())).await?;
        Ok(())
    })
}
