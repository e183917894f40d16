//! HTTP/JSON service over a [`Gate`].
//!
//! Every body is the canonical JSON encoding of a core type. Gate calls are
//! blocking, so handlers run them on the blocking pool. The only route that
//! reaches the executor is the dispatch route, and it goes through
//! [`Gate::dispatch`].

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use uuid::Uuid;

use schemagate_core::executor::{ExecutorError, RunFilter};
use schemagate_core::gate::{parameter_schema, Gate, GateError, Planner, ScriptRule, ScriptedPlanner};
use schemagate_core::registry::{RegistryError, VersionReq};
use schemagate_core::replay::Script;
use schemagate_core::runtime::Runtime;
use schemagate_core::schema::Version;
use schemagate_core::Diagnostic;

/// Method and path of every route, for auditing the surface.
pub const ROUTES: &[(&str, &str)] = &[
    ("GET", "/health"),
    ("POST", "/sessions"),
    ("GET", "/sessions/{id}"),
    ("POST", "/sessions/{id}/messages"),
    ("POST", "/sessions/{id}/invocations"),
    ("PATCH", "/sessions/{id}/invocations/{iid}"),
    ("POST", "/sessions/{id}/invocations/{iid}/approve"),
    ("POST", "/sessions/{id}/invocations/{iid}/dispatch"),
    ("GET", "/workflows"),
    ("GET", "/workflows/{id}/parameters"),
    ("GET", "/datasets"),
    ("GET", "/runs"),
    ("GET", "/runs/compare"),
    ("GET", "/runs/{id}"),
    ("GET", "/runs/{id}/events"),
];

/// The one route that submits work.
pub const DISPATCH_ROUTE: (&str, &str) = ("POST", "/sessions/{id}/invocations/{iid}/dispatch");

#[derive(Clone)]
pub struct AppState {
    pub gate: Arc<Gate>,
    pub planner: Arc<dyn Planner>,
}

impl AppState {
    pub fn new(gate: Arc<Gate>, planner: Arc<dyn Planner>) -> Self {
        Self { gate, planner }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status: status.as_u16(), code: code.into(), message: message.into(), diagnostics: Vec::new() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<GateError> for ApiError {
    fn from(e: GateError) -> Self {
        let status = match &e {
            GateError::SessionNotFound(_) | GateError::InvocationNotFound(_) => StatusCode::NOT_FOUND,
            GateError::NotFound(inner) if inner.is_not_found() => StatusCode::NOT_FOUND,
            GateError::NotFound(_) => StatusCode::INTERNAL_SERVER_ERROR,
            GateError::UnknownParameter { .. } | GateError::GateRegression { .. } | GateError::ActionRejected { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            GateError::NotValidated { .. }
            | GateError::NotApproved { .. }
            | GateError::AlreadyDispatched(_)
            | GateError::NothingToAmend => StatusCode::CONFLICT,
            GateError::ExecutorUnavailable(_) | GateError::PlannerUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        };
        Self { status: status.as_u16(), code: e.code().into(), message: e.to_string(), diagnostics: e.diagnostics().to_vec() }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        if e.is_not_found() {
            Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
        } else {
            Self::new(StatusCode::INTERNAL_SERVER_ERROR, "registry_error", e.to_string())
        }
    }
}

impl From<ExecutorError> for ApiError {
    fn from(e: ExecutorError) -> Self {
        match e {
            ExecutorError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            other => Self::new(StatusCode::SERVICE_UNAVAILABLE, "executor_unavailable", other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, E>(f: impl FnOnce() -> Result<T, E> + Send + 'static) -> ApiResult<T>
where
    T: Send + 'static,
    E: Into<ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(Into::into),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

fn uuid(text: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(text).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("`{text}` is not a valid id")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/invocations", post(propose))
        .route("/sessions/{id}/invocations/{iid}", patch(update_invocation))
        .route("/sessions/{id}/invocations/{iid}/approve", post(approve))
        .route("/sessions/{id}/invocations/{iid}/dispatch", post(dispatch))
        .route("/workflows", get(search_workflows))
        .route("/workflows/{id}/parameters", get(get_parameters))
        .route("/datasets", get(list_datasets))
        .route("/runs", get(query_runs))
        .route("/runs/compare", get(compare_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/events", get(run_events))
        .with_state(state)
}

// -- health -----------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Health {
    pub status: String,
    pub registry_entries: schemagate_core::registry::RegistryCounts,
    pub open_sessions: usize,
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub problems: Vec<String>,
}

/// Reads store state without changing it; `degraded` when any store fails
/// its integrity scan.
pub fn health_of(gate: &Gate) -> Health {
    let mut problems = gate.registry().integrity_scan();
    problems.extend(gate.executor().store().integrity_scan());
    let runs = gate.executor().query_runs(&RunFilter::default()).len();
    Health {
        status: if problems.is_empty() { "ok" } else { "degraded" }.into(),
        registry_entries: gate.registry().counts(),
        open_sessions: gate.session_count(),
        runs,
        problems,
    }
}

async fn health(State(s): State<AppState>) -> ApiResult<Json<Health>> {
    let gate = s.gate.clone();
    blocking(move || Ok::<_, ApiError>(Json(health_of(&gate)))).await
}

// -- sessions ---------------------------------------------------------------

async fn open_session(State(s): State<AppState>) -> impl IntoResponse {
    (StatusCode::CREATED, Json(s.gate.open_session()))
}

async fn get_session(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let id = uuid(&id)?;
    Ok(Json(serde_json::to_value(s.gate.session(id)?).unwrap_or(Value::Null)))
}

#[derive(Deserialize)]
struct MessageBody {
    #[serde(default)]
    text: Option<String>,
}

async fn post_message(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<MessageBody>,
) -> ApiResult<Json<Value>> {
    let id = uuid(&id)?;
    blocking(move || {
        let outcome = s.gate.step(id, body.text.as_deref(), s.planner.as_ref())?;
        Ok::<_, GateError>(Json(serde_json::to_value(outcome).unwrap_or(Value::Null)))
    })
    .await
}

#[derive(Deserialize)]
struct ProposeBody {
    workflow_id: String,
    #[serde(default)]
    version: Option<Version>,
    #[serde(default)]
    parameters: Map<String, Value>,
}

async fn propose(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<ProposeBody>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let id = uuid(&id)?;
    blocking(move || {
        let p = s.gate.propose(id, &body.workflow_id, body.version, body.parameters)?;
        Ok::<_, GateError>((StatusCode::CREATED, Json(serde_json::to_value(p).unwrap_or(Value::Null))))
    })
    .await
}

#[derive(Deserialize, Default, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum UpdateMode {
    #[default]
    Clarify,
    Amend,
}

#[derive(Deserialize)]
struct UpdateBody {
    #[serde(default)]
    parameters: Map<String, Value>,
    #[serde(default)]
    mode: UpdateMode,
}

/// `mode: clarify` (default) edits the invocation in place; `mode: amend`
/// derives a new invocation from it.
async fn update_invocation(
    State(s): State<AppState>,
    UrlPath((id, iid)): UrlPath<(String, String)>,
    Json(body): Json<UpdateBody>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let (id, iid) = (uuid(&id)?, uuid(&iid)?);
    blocking(move || {
        let (status, p) = match body.mode {
            UpdateMode::Clarify => (StatusCode::OK, s.gate.clarify(id, iid, body.parameters)?),
            UpdateMode::Amend => (StatusCode::CREATED, s.gate.amend(id, iid, body.parameters)?),
        };
        Ok::<_, GateError>((status, Json(serde_json::to_value(p).unwrap_or(Value::Null))))
    })
    .await
}

#[derive(Deserialize, Default)]
struct ApproveBody {
    #[serde(default)]
    approver: Option<String>,
}

async fn approve(
    State(s): State<AppState>,
    UrlPath((id, iid)): UrlPath<(String, String)>,
    body: Option<Json<ApproveBody>>,
) -> ApiResult<Json<Value>> {
    let (id, iid) = (uuid(&id)?, uuid(&iid)?);
    let approver = body.and_then(|b| b.0.approver).unwrap_or_else(|| "api".into());
    blocking(move || {
        let inv = s.gate.approve(id, iid, &approver)?;
        Ok::<_, GateError>(Json(serde_json::to_value(inv).unwrap_or(Value::Null)))
    })
    .await
}

async fn dispatch(
    State(s): State<AppState>,
    UrlPath((id, iid)): UrlPath<(String, String)>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let (id, iid) = (uuid(&id)?, uuid(&iid)?);
    blocking(move || {
        let run_id = s.gate.dispatch(id, iid)?;
        Ok::<_, GateError>((StatusCode::ACCEPTED, Json(json!({"run_id": run_id}))))
    })
    .await
}

// -- registry ---------------------------------------------------------------

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    q: String,
    /// Comma-separated.
    #[serde(default)]
    tags: Option<String>,
}

async fn search_workflows(State(s): State<AppState>, Query(query): Query<SearchQuery>) -> Json<Value> {
    let tags: Vec<String> = query
        .tags
        .map(|t| t.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect())
        .unwrap_or_default();
    Json(json!({"results": s.gate.registry().search_workflows(&query.q, &tags)}))
}

#[derive(Deserialize)]
struct VersionQuery {
    #[serde(default)]
    version: Option<Version>,
}

async fn get_parameters(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<Json<Value>> {
    let req: VersionReq = q.version.into();
    let wf = s.gate.registry().workflow(&id, req)?;
    Ok(Json(parameter_schema(&wf)))
}

async fn list_datasets(State(s): State<AppState>) -> Json<Value> {
    Json(json!({"datasets": s.gate.registry().list_datasets()}))
}

// -- runs -------------------------------------------------------------------

async fn query_runs(State(s): State<AppState>, Query(filter): Query<RunFilter>) -> ApiResult<Json<Value>> {
    let gate = s.gate.clone();
    blocking(move || Ok::<_, ApiError>(Json(json!({"runs": gate.executor().query_runs(&filter)})))).await
}

#[derive(Deserialize)]
struct CompareQuery {
    a: String,
    b: String,
}

async fn compare_runs(State(s): State<AppState>, Query(q): Query<CompareQuery>) -> ApiResult<Json<Value>> {
    let (a, b) = (uuid(&q.a)?, uuid(&q.b)?);
    let c = s.gate.executor().compare_runs(a, b)?;
    Ok(Json(serde_json::to_value(c).unwrap_or(Value::Null)))
}

async fn get_run(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let id = uuid(&id)?;
    let record = s.gate.executor().get_run(id)?;
    Ok(Json(serde_json::to_value(record).unwrap_or(Value::Null)))
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    from: Option<u64>,
}

/// Server-sent events, one per run event, ending after `run_finished`.
/// Resumes after `Last-Event-ID` (or `?from=`).
async fn run_events(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let id = uuid(&id)?;
    let executor = s.gate.executor().clone();
    executor.get_run(id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .map(|last| last + 1);
    let from = resume.or(q.from).unwrap_or(0);
    let batches = stream::unfold((from, false), move |(from, done)| {
        let executor = executor.clone();
        async move {
            if done {
                return None;
            }
            let waited =
                tokio::task::spawn_blocking(move || executor.wait_events(id, from, Duration::from_secs(15))).await;
            let (events, finished) = match waited {
                Ok(Ok(r)) => r,
                _ => return None,
            };
            let next = from + events.len() as u64;
            let items: Vec<Result<Event, Infallible>> = events
                .iter()
                .map(|e| {
                    Ok(Event::default()
                        .id(e.seq.to_string())
                        .event(serde_json::to_value(e.event).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                        .data(serde_json::to_string(e).unwrap_or_default()))
                })
                .collect();
            Some((stream::iter(items), (next, finished)))
        }
    })
    .flatten();
    Ok(Sse::new(batches).keep_alive(KeepAlive::default()))
}

// -- startup ----------------------------------------------------------------

/// Parses a planner script: either a bare rule list or a session script
/// whose `planner` field holds the rules.
pub fn scripted_planner_from_file(path: &Path) -> Result<ScriptedPlanner, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let rules: Vec<ScriptRule> = if value.is_array() {
        serde_json::from_value(value).map_err(|e| e.to_string())?
    } else {
        Script::parse(&text).map_err(|e| e.to_string())?.planner
    };
    ScriptedPlanner::new(rules)
}

/// Refuses to start over a store that fails its integrity scan; then marks
/// runs left `running` by a previous process as aborted.
pub fn prepare(runtime: &Runtime) -> Result<(), Vec<String>> {
    let mut problems = runtime.registry.integrity_scan();
    problems.extend(runtime.executor.store().integrity_scan());
    if !problems.is_empty() {
        return Err(problems);
    }
    runtime.executor.store().recover(chrono::Utc::now()).map_err(|e| vec![e.to_string()])?;
    Ok(())
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
