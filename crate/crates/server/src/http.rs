//! The `/api/v1` HTTP surface.
//!
//! Generation endpoints answer `202` with a job that can be polled or
//! followed over SSE; runs stream their event log over SSE with `seq` as the
//! event id. A mutating request carrying `X-Request-Id` is answered once:
//! retries with the same id get the first response back verbatim.

use crate::config::Config;
use crate::error::ApiError;
use crate::provider::build_gateway;
use crate::service::{self, AspectEdit, Service, StrategyState, TaskPatch};
use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{FromRequest, Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use coordkit_core::explore::{NodeId, SessionKind, SpawnRequest};
use coordkit_core::gateway::SchemaId;
use coordkit_core::genesis::AspectSet;
use coordkit_core::model::{validate_strategy, AgentId, Strategy};
use coordkit_core::runtime::{check_executable, rebuild, ExecutionRecord, RunEvent};
use coordkit_core::versions::VersionId;
use coordkit_core::views;
use coordkit_core::workspace::{self, ExportFormat, Project, PROJECT_EXTENSION};
use futures::stream::{self, Stream};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::convert::Infallible;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};
use std::time::Duration;
use tokio::sync::watch;

pub const API_BASE: &str = "/api/v1";
pub const REQUEST_ID_HEADER: &str = "x-request-id";

pub type Shared = Arc<AppState>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

/// An open project: writes are serialized by `writer`; readers see the
/// last committed snapshot without waiting.
pub struct ProjectHandle {
    path: PathBuf,
    writer: tokio::sync::Mutex<()>,
    committed: RwLock<Arc<Project>>,
}

impl ProjectHandle {
    fn new(path: PathBuf, project: Project) -> Self {
        Self {
            path,
            writer: tokio::sync::Mutex::new(()),
            committed: RwLock::new(Arc::new(project)),
        }
    }

    pub fn snapshot(&self) -> Arc<Project> {
        self.committed
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .clone()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobView {
    pub id: String,
    pub kind: String,
    pub project_id: String,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

struct RunLog {
    events: Vec<RunEvent>,
    outcome: Option<Result<ExecutionRecord, ApiError>>,
}

/// A run's event log as it grows. `bump` ticks after every append so SSE
/// streams can wait for more.
pub struct RunHandle {
    run_id: String,
    project_id: String,
    log: Mutex<RunLog>,
    bump: watch::Sender<u64>,
}

impl RunHandle {
    fn new(run_id: String, project_id: String) -> Self {
        Self {
            run_id,
            project_id,
            log: Mutex::new(RunLog {
                events: Vec::new(),
                outcome: None,
            }),
            bump: watch::Sender::new(0),
        }
    }

    fn finished(project_id: String, record: ExecutionRecord) -> Self {
        let handle = Self::new(record.run_id.clone(), project_id);
        {
            let mut log = lock(&handle.log);
            log.events = record.events.clone();
            log.outcome = Some(Ok(record));
        }
        handle
    }

    fn push(&self, event: &RunEvent) {
        lock(&self.log).events.push(event.clone());
        self.bump.send_modify(|n| *n += 1);
    }

    fn finish(&self, outcome: Result<ExecutionRecord, ApiError>) {
        lock(&self.log).outcome = Some(outcome);
        self.bump.send_modify(|n| *n += 1);
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunView {
    pub run_id: String,
    pub project_id: String,
    pub done: bool,
    /// The final record, or the record so far while the run is live.
    pub record: ExecutionRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Clone)]
struct Reply {
    status: StatusCode,
    content_type: Option<HeaderValue>,
    location: Option<HeaderValue>,
    body: Bytes,
}

type ReplySlot = Arc<tokio::sync::Mutex<Option<Reply>>>;

pub struct AppState {
    service: Service,
    data_dir: PathBuf,
    projects: Mutex<BTreeMap<String, Arc<ProjectHandle>>>,
    jobs: Mutex<HashMap<String, watch::Sender<JobView>>>,
    runs: Mutex<HashMap<String, Arc<RunHandle>>>,
    active_runs: Mutex<HashSet<(String, VersionId)>>,
    replies: Mutex<HashMap<String, ReplySlot>>,
}

impl AppState {
    pub fn new(service: Service, data_dir: impl Into<PathBuf>) -> Shared {
        Arc::new(Self {
            service,
            data_dir: data_dir.into(),
            projects: Mutex::new(BTreeMap::new()),
            jobs: Mutex::new(HashMap::new()),
            runs: Mutex::new(HashMap::new()),
            active_runs: Mutex::new(HashSet::new()),
            replies: Mutex::new(HashMap::new()),
        })
    }

    /// Loads a project file and makes it addressable by its id.
    pub async fn open_project(&self, path: &Path) -> Result<String, ApiError> {
        let owned = path.to_path_buf();
        let project = blocking(move || Ok(workspace::load(&owned)?)).await?;
        let id = project.id.clone();
        let mut projects = lock(&self.projects);
        if let Some(existing) = projects.get(&id) {
            if same_file(existing.path(), path) {
                return Ok(id);
            }
            return Err(ApiError::new(
                "project-exists",
                format!("a different project with id '{id}' is already open"),
            ));
        }
        projects.insert(
            id.clone(),
            Arc::new(ProjectHandle::new(path.to_path_buf(), project)),
        );
        Ok(id)
    }

    pub fn project(&self, id: &str) -> Result<Arc<ProjectHandle>, ApiError> {
        lock(&self.projects)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new("unknown-project", format!("no open project '{id}'")))
    }

    fn job(&self, id: &str) -> Result<watch::Receiver<JobView>, ApiError> {
        lock(&self.jobs)
            .get(id)
            .map(watch::Sender::subscribe)
            .ok_or_else(|| ApiError::new("unknown-job", format!("no job '{id}'")))
    }

    /// A live run, or a finished one found in an open project's run index.
    async fn run(&self, id: &str) -> Result<Arc<RunHandle>, ApiError> {
        if let Some(r) = lock(&self.runs).get(id) {
            return Ok(r.clone());
        }
        let owner = lock(&self.projects)
            .iter()
            .find(|(_, h)| h.snapshot().run(id).is_ok())
            .map(|(pid, h)| (pid.clone(), h.clone()));
        let (pid, handle) =
            owner.ok_or_else(|| ApiError::new("unknown-run", format!("no run '{id}'")))?;
        let snapshot = handle.snapshot();
        let path = handle.path.clone();
        let run_id = id.to_string();
        let record = blocking(move || Ok(workspace::load_run(&snapshot, &path, &run_id)?)).await?;
        let run = Arc::new(RunHandle::finished(pid, record));
        lock(&self.runs).insert(id.to_string(), run.clone());
        Ok(run)
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// JSON request body whose decoding errors become `bad-request` envelopes
/// with the offending path. An empty body reads as `{}`.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) {
            b"{}"
        } else {
            &bytes
        };
        let de = &mut serde_json::Deserializer::from_slice(text);
        serde_path_to_error::deserialize(de)
            .map(JsonBody)
            .map_err(|e| {
                let path = e.path().to_string();
                let err = ApiError::bad_request(e.inner().to_string());
                if path == "." {
                    err
                } else {
                    err.at(path)
                }
            })
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new("internal", format!("worker failed: {e}")))?
}

/// Applies `f` to a copy of the project under the write lock, saves it, and
/// only then publishes it. On error nothing changes, on disk or in memory.
async fn mutate<T, F>(handle: &Arc<ProjectHandle>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Project, &Path) -> Result<T, ApiError> + Send + 'static,
{
    let _writer = handle.writer.lock().await;
    let mut project = Project::clone(&handle.snapshot());
    let path = handle.path.clone();
    let (project, out) = blocking(move || {
        let out = f(&mut project, &path)?;
        workspace::save(&project, &path)?;
        Ok((project, out))
    })
    .await?;
    *handle
        .committed
        .write()
        .unwrap_or_else(PoisonError::into_inner) = Arc::new(project);
    Ok(out)
}

fn spawn_job<T, W>(state: &Shared, project_id: &str, kind: &str, work: W) -> Response
where
    T: Serialize,
    W: Future<Output = Result<T, ApiError>> + Send + 'static,
{
    let id = format!("job-{}", uuid::Uuid::new_v4().simple());
    let view = JobView {
        id: id.clone(),
        kind: kind.to_string(),
        project_id: project_id.to_string(),
        state: JobState::Running,
        result: None,
        error: None,
        created_at: Utc::now(),
        finished_at: None,
    };
    let tx = watch::Sender::new(view.clone());
    lock(&state.jobs).insert(id.clone(), tx.clone());
    tokio::spawn(async move {
        let outcome = work.await.and_then(|v| {
            serde_json::to_value(v).map_err(|e| ApiError::new("internal", e.to_string()))
        });
        tx.send_modify(|job| {
            job.finished_at = Some(Utc::now());
            match outcome {
                Ok(v) => {
                    job.state = JobState::Succeeded;
                    job.result = Some(v);
                }
                Err(e) => {
                    job.state = JobState::Failed;
                    job.error = Some(e);
                }
            }
        });
    });
    let location = format!("{API_BASE}/jobs/{id}");
    (
        StatusCode::ACCEPTED,
        [(header::LOCATION, location)],
        Json(view),
    )
        .into_response()
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/schemas", get(list_schemas))
        .route("/schemas/{slug}", get(get_schema))
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/open", post(open_project))
        .route("/projects/{pid}", get(get_project))
        .route(
            "/projects/{pid}/strategy",
            get(get_strategy).put(put_strategy),
        )
        .route("/projects/{pid}/validation", get(get_validation))
        .route("/projects/{pid}/views", get(get_views))
        .route("/projects/{pid}/board", put(put_board))
        .route("/projects/{pid}/generate", post(generate))
        .route("/projects/{pid}/tasks/{tid}", patch(patch_task))
        .route(
            "/projects/{pid}/tasks/{tid}/actions/{index}",
            patch(patch_action),
        )
        .route("/projects/{pid}/tasks/{tid}/aspects", post(task_aspects))
        .route("/projects/{pid}/tasks/{tid}/scores", post(task_scores))
        .route(
            "/projects/{pid}/sessions",
            get(list_sessions).post(create_session),
        )
        .route("/projects/{pid}/sessions/{sid}", get(get_session))
        .route("/projects/{pid}/sessions/{sid}/nodes/{nid}", get(get_node))
        .route(
            "/projects/{pid}/sessions/{sid}/branches",
            post(spawn_branches),
        )
        .route("/projects/{pid}/sessions/{sid}/baseline", put(set_baseline))
        .route("/projects/{pid}/sessions/{sid}/adopt", post(adopt))
        .route("/projects/{pid}/sessions/{sid}/team", patch(edit_team))
        .route(
            "/projects/{pid}/sessions/{sid}/aspects",
            post(session_aspects),
        )
        .route(
            "/projects/{pid}/sessions/{sid}/scores",
            post(session_scores),
        )
        .route("/projects/{pid}/sessions/{sid}/ranking", get(ranking))
        .route("/projects/{pid}/runs", get(list_runs).post(start_run))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/events", get(job_events))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/events", get(run_events))
        .route("/runs/{id}/trace", get(get_trace))
        .route("/runs/{id}/export", get(export_run))
        .fallback(|| async { ApiError::new("not-found", "no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .with_state(state);
    Router::new().nest(API_BASE, api)
}

/// Replays the stored response for a repeated `X-Request-Id`. Concurrent
/// duplicates wait for the first to finish. Server errors are not stored,
/// so a retry after one runs again.
async fn idempotency(State(state): State<Shared>, req: Request, next: Next) -> Response {
    if matches!(*req.method(), Method::GET | Method::HEAD | Method::OPTIONS) {
        return next.run(req).await;
    }
    let Some(id) = req
        .headers()
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
    else {
        return next.run(req).await;
    };
    let key = format!("{} {} {}", req.method(), req.uri().path(), id);
    let slot = lock(&state.replies).entry(key).or_default().clone();
    let mut stored = slot.lock().await;
    if let Some(reply) = stored.as_ref() {
        let mut response = build_reply(reply);
        response
            .headers_mut()
            .insert("idempotent-replay", HeaderValue::from_static("true"));
        return response;
    }
    let (parts, body) = next.run(req).await.into_parts();
    let body = match to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::new("internal", e.to_string()).into_response(),
    };
    let reply = Reply {
        status: parts.status,
        content_type: parts.headers.get(header::CONTENT_TYPE).cloned(),
        location: parts.headers.get(header::LOCATION).cloned(),
        body,
    };
    if !reply.status.is_server_error() {
        *stored = Some(reply.clone());
    }
    build_reply(&reply)
}

fn build_reply(reply: &Reply) -> Response {
    let mut response = Response::new(Body::from(reply.body.clone()));
    *response.status_mut() = reply.status;
    if let Some(ct) = &reply.content_type {
        response
            .headers_mut()
            .insert(header::CONTENT_TYPE, ct.clone());
    }
    if let Some(loc) = &reply.location {
        response.headers_mut().insert(header::LOCATION, loc.clone());
    }
    response
}

type ApiResult<T> = Result<T, ApiError>;

async fn health(State(state): State<Shared>) -> Json<Value> {
    Json(json!({ "status": "ok", "provider": state.service.provider() }))
}

async fn list_schemas() -> Json<Vec<&'static str>> {
    Json(SchemaId::ALL.iter().map(|s| s.slug()).collect())
}

async fn get_schema(UrlPath(slug): UrlPath<String>) -> ApiResult<Response> {
    let slug = slug.strip_suffix(".json").unwrap_or(&slug);
    let id = SchemaId::from_slug(slug)
        .ok_or_else(|| ApiError::new("unknown-schema", format!("no schema '{slug}'")))?;
    Ok((
        [(header::CONTENT_TYPE, "application/schema+json")],
        id.document(),
    )
        .into_response())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ProjectSummary {
    id: String,
    name: String,
    goal: String,
    path: PathBuf,
    current_strategy: VersionId,
    tasks: usize,
    agents: usize,
    sessions: usize,
    runs: usize,
}

fn summary(handle: &ProjectHandle) -> ProjectSummary {
    let p = handle.snapshot();
    ProjectSummary {
        id: p.id.clone(),
        name: p.name.clone(),
        goal: p.goal.as_str().to_string(),
        path: handle.path.clone(),
        current_strategy: p.current_strategy.clone(),
        tasks: p.strategy().tasks.len(),
        agents: p.agent_board.agents.len(),
        sessions: p.exploration_sessions.len(),
        runs: p.runs.len(),
    }
}

async fn list_projects(State(state): State<Shared>) -> Json<Vec<ProjectSummary>> {
    let handles: Vec<_> = lock(&state.projects).values().cloned().collect();
    Json(handles.iter().map(|h| summary(h)).collect())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateProject {
    name: String,
    goal: String,
    #[serde(default)]
    id: Option<String>,
}

fn slug(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    let out = out.trim_end_matches('-');
    let out: String = out.chars().take(48).collect();
    if out.is_empty() {
        "project".to_string()
    } else {
        out
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

async fn create_project(
    State(state): State<Shared>,
    JsonBody(body): JsonBody<CreateProject>,
) -> ApiResult<Response> {
    if body.name.trim().is_empty() {
        return Err(ApiError::bad_request("name must not be empty").at("name"));
    }
    if body.goal.trim().is_empty() {
        return Err(ApiError::new("empty-goal", "goal must not be empty").at("goal"));
    }
    let path_for = |id: &str| state.data_dir.join(format!("{id}{PROJECT_EXTENSION}"));
    let taken = |id: &str| lock(&state.projects).contains_key(id) || path_for(id).exists();
    let id = match body.id {
        Some(id) => {
            if !valid_id(&id) {
                return Err(ApiError::bad_request("id may only contain a-z, 0-9 and '-'").at("id"));
            }
            if taken(&id) {
                return Err(ApiError::new(
                    "project-exists",
                    format!("project '{id}' already exists"),
                ));
            }
            id
        }
        None => {
            let base = slug(&body.name);
            let mut id = base.clone();
            let mut n = 2;
            while taken(&id) {
                id = format!("{base}-{n}");
                n += 1;
            }
            id
        }
    };
    let project = Project::new(
        id.clone(),
        body.name.trim(),
        coordkit_core::model::Goal::new(body.goal.trim()),
        Default::default(),
    );
    let path = path_for(&id);
    let saved = project.clone();
    let save_path = path.clone();
    blocking(move || Ok(workspace::save(&saved, &save_path)?)).await?;
    let handle = Arc::new(ProjectHandle::new(path, project));
    lock(&state.projects).insert(id, handle.clone());
    Ok((StatusCode::CREATED, Json(summary(&handle))).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenProject {
    path: PathBuf,
}

async fn open_project(
    State(state): State<Shared>,
    JsonBody(body): JsonBody<OpenProject>,
) -> ApiResult<Json<ProjectSummary>> {
    if !body.path.is_file() {
        return Err(
            ApiError::new("not-found", format!("no file {}", body.path.display())).at("path"),
        );
    }
    let id = state.open_project(&body.path).await?;
    let handle = state.project(&id)?;
    Ok(Json(summary(&handle)))
}

async fn get_project(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
) -> ApiResult<Json<Project>> {
    Ok(Json(Project::clone(&state.project(&pid)?.snapshot())))
}

async fn get_strategy(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
) -> ApiResult<Json<StrategyState>> {
    Ok(Json(StrategyState::of(&state.project(&pid)?.snapshot())))
}

async fn put_strategy(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
    JsonBody(strategy): JsonBody<Strategy>,
) -> ApiResult<Json<StrategyState>> {
    let handle = state.project(&pid)?;
    let svc = state.service.clone();
    Ok(Json(
        mutate(&handle, move |p, _| svc.put_strategy(p, strategy)).await?,
    ))
}

async fn get_validation(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
) -> ApiResult<Json<Value>> {
    let p = state.project(&pid)?.snapshot();
    let report = validate_strategy(p.strategy());
    let executable = check_executable(p.strategy()).err().map(ApiError::from);
    Ok(Json(
        json!({ "report": report, "executable": executable.is_none(), "blocker": executable }),
    ))
}

#[derive(Deserialize)]
struct FocusQuery {
    focus: Option<String>,
}

async fn get_views(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
    Query(q): Query<FocusQuery>,
) -> ApiResult<Json<views::Views>> {
    let p = state.project(&pid)?.snapshot();
    let focus = match q.focus.as_deref() {
        Some(key) => Some(state.service.task_id(&p, key)?),
        None => None,
    };
    Ok(Json(views::views(p.strategy(), focus.as_ref())))
}

async fn put_board(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let text = String::from_utf8(body.to_vec())
        .map_err(|_| ApiError::bad_request("board must be UTF-8 JSON"))?;
    let handle = state.project(&pid)?;
    let svc = state.service.clone();
    let board = mutate(&handle, move |p, _| svc.import_board(p, &text)).await?;
    Ok(Json(json!({ "agents": board.agents })))
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
enum Stage {
    #[default]
    Full,
    Outline,
    Assign,
    Process,
}

/// `?provider=` on generation endpoints overrides the configured provider
/// for that one operation.
#[derive(Deserialize)]
struct Route {
    provider: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct GenerateBody {
    #[serde(default)]
    stage: Stage,
    goal: Option<String>,
    task_id: Option<String>,
}

async fn generate(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
    Query(route): Query<Route>,
    JsonBody(body): JsonBody<GenerateBody>,
) -> ApiResult<Response> {
    let handle = state.project(&pid)?;
    let svc = state.service.routed(route.provider.as_deref())?;
    let need_task = || {
        body.task_id
            .clone()
            .ok_or_else(|| ApiError::bad_request("this stage needs taskId").at("taskId"))
    };
    if let Some(g) = &body.goal {
        if g.trim().is_empty() {
            return Err(ApiError::new("empty-goal", "goal must not be empty").at("goal"));
        }
    }
    Ok(match body.stage {
        Stage::Full => {
            let goal = body.goal.clone();
            spawn_job(&state, &pid, "generate-full", async move {
                mutate(&handle, move |p, _| svc.generate_full(p, goal.as_deref())).await
            })
        }
        Stage::Outline => {
            let goal = body.goal.clone();
            spawn_job(&state, &pid, "generate-outline", async move {
                mutate(&handle, move |p, _| {
                    svc.generate_outline(p, goal.as_deref())
                })
                .await
            })
        }
        Stage::Assign => {
            let task = need_task()?;
            spawn_job(&state, &pid, "assign", async move {
                mutate(&handle, move |p, _| svc.assign(p, &task)).await
            })
        }
        Stage::Process => {
            let task = need_task()?;
            spawn_job(&state, &pid, "generate-process", async move {
                mutate(&handle, move |p, _| svc.generate_process(p, &task)).await
            })
        }
    })
}

async fn patch_task(
    State(state): State<Shared>,
    UrlPath((pid, tid)): UrlPath<(String, String)>,
    JsonBody(patch): JsonBody<TaskPatch>,
) -> ApiResult<Json<StrategyState>> {
    let handle = state.project(&pid)?;
    let svc = state.service.clone();
    Ok(Json(
        mutate(&handle, move |p, _| svc.edit_task(p, &tid, &patch)).await?,
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstructionBody {
    instruction: String,
}

async fn patch_action(
    State(state): State<Shared>,
    UrlPath((pid, tid, index)): UrlPath<(String, String, String)>,
    JsonBody(body): JsonBody<InstructionBody>,
) -> ApiResult<Json<StrategyState>> {
    let index: usize = index
        .parse()
        .map_err(|_| ApiError::bad_request(format!("'{index}' is not an action index")))?;
    let handle = state.project(&pid)?;
    let svc = state.service.clone();
    Ok(Json(
        mutate(&handle, move |p, _| {
            svc.edit_instruction(p, &tid, index, &body.instruction)
        })
        .await?,
    ))
}

async fn task_aspects(
    State(state): State<Shared>,
    UrlPath((pid, tid)): UrlPath<(String, String)>,
    Query(route): Query<Route>,
) -> ApiResult<Response> {
    let snapshot = state.project(&pid)?.snapshot();
    state.service.task_id(&snapshot, &tid)?;
    let svc = state.service.routed(route.provider.as_deref())?;
    Ok(spawn_job(&state, &pid, "derive-aspects", async move {
        blocking(move || svc.derive_aspects(&snapshot, &tid)).await
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreBody {
    aspects: Vec<String>,
}

async fn task_scores(
    State(state): State<Shared>,
    UrlPath((pid, tid)): UrlPath<(String, String)>,
    Query(route): Query<Route>,
    JsonBody(body): JsonBody<ScoreBody>,
) -> ApiResult<Response> {
    let snapshot = state.project(&pid)?.snapshot();
    state.service.task_id(&snapshot, &tid)?;
    let mut aspects = AspectSet::default();
    for (i, name) in body.aspects.iter().enumerate() {
        aspects
            .add_user(name)
            .map_err(|e| ApiError::from(e).at(format!("aspects[{i}]")))?;
    }
    if aspects.aspects.is_empty() {
        return Err(ApiError::new("no-aspects", "give at least one aspect").at("aspects"));
    }
    let svc = state.service.routed(route.provider.as_deref())?;
    Ok(spawn_job(&state, &pid, "score-agents", async move {
        blocking(move || svc.score(&snapshot, &tid, &aspects)).await
    }))
}

async fn list_sessions(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
) -> ApiResult<Json<Value>> {
    let p = state.project(&pid)?.snapshot();
    Ok(Json(json!(p.exploration_sessions)))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SessionBody {
    kind: SessionKind,
    task_id: Option<String>,
}

async fn create_session(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
    JsonBody(body): JsonBody<SessionBody>,
) -> ApiResult<Response> {
    let handle = state.project(&pid)?;
    let svc = state.service.clone();
    let session = mutate(&handle, move |p, _| {
        svc.open_session(p, body.kind, body.task_id.as_deref(), Utc::now())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn get_session(
    State(state): State<Shared>,
    UrlPath((pid, sid)): UrlPath<(String, String)>,
) -> ApiResult<Json<Value>> {
    let p = state.project(&pid)?.snapshot();
    Ok(Json(json!(p.session(&sid)?)))
}

async fn get_node(
    State(state): State<Shared>,
    UrlPath((pid, sid, nid)): UrlPath<(String, String, String)>,
) -> ApiResult<Json<Value>> {
    let p = state.project(&pid)?.snapshot();
    let session = p.session(&sid)?;
    let node = NodeId(nid);
    let meta = session
        .node(&node)
        .ok_or_else(|| ApiError::new("unknown-node", format!("no node '{node}' in {sid}")))?;
    let payload = session.payload(&p.versions, &node)?;
    Ok(Json(json!({ "node": meta, "payload": payload })))
}

async fn spawn_branches(
    State(state): State<Shared>,
    UrlPath((pid, sid)): UrlPath<(String, String)>,
    Query(route): Query<Route>,
    JsonBody(request): JsonBody<SpawnRequest>,
) -> ApiResult<Response> {
    let handle = state.project(&pid)?;
    handle.snapshot().session(&sid)?;
    let svc = state.service.routed(route.provider.as_deref())?;
    Ok(spawn_job(&state, &pid, "spawn-branches", async move {
        let nodes = mutate(&handle, move |p, _| {
            svc.spawn(p, &sid, &request, Utc::now())
        })
        .await?;
        Ok(json!({ "nodes": nodes }))
    }))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NodeBody {
    node_id: NodeId,
}

async fn set_baseline(
    State(state): State<Shared>,
    UrlPath((pid, sid)): UrlPath<(String, String)>,
    JsonBody(body): JsonBody<NodeBody>,
) -> ApiResult<Json<Value>> {
    let handle = state.project(&pid)?;
    let svc = state.service.clone();
    let node = body.node_id.clone();
    mutate(&handle, move |p, _| svc.set_baseline(p, &sid, &node)).await?;
    Ok(Json(json!({ "activeBaseline": body.node_id })))
}

async fn adopt(
    State(state): State<Shared>,
    UrlPath((pid, sid)): UrlPath<(String, String)>,
    JsonBody(body): JsonBody<NodeBody>,
) -> ApiResult<Response> {
    let handle = state.project(&pid)?;
    let svc = state.service.clone();
    // Adopting a team may regenerate the task's process, so it is a job.
    let snapshot = handle.snapshot();
    let session = snapshot.session(&sid)?;
    if session.kind == SessionKind::AgentAssignment {
        return Ok(spawn_job(&state, &pid, "adopt", async move {
            mutate(&handle, move |p, _| svc.adopt(p, &sid, &body.node_id)).await
        }));
    }
    Ok(Json(mutate(&handle, move |p, _| svc.adopt(p, &sid, &body.node_id)).await?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TeamBody {
    #[serde(default)]
    add: Vec<AgentId>,
    #[serde(default)]
    remove: Vec<AgentId>,
}

async fn edit_team(
    State(state): State<Shared>,
    UrlPath((pid, sid)): UrlPath<(String, String)>,
    JsonBody(body): JsonBody<TeamBody>,
) -> ApiResult<Json<Value>> {
    let handle = state.project(&pid)?;
    let svc = state.service.clone();
    let team = mutate(&handle, move |p, _| {
        svc.edit_team(p, &sid, &body.add, &body.remove, Utc::now())
    })
    .await?;
    Ok(Json(json!({ "team": team })))
}

async fn session_aspects(
    State(state): State<Shared>,
    UrlPath((pid, sid)): UrlPath<(String, String)>,
    Query(route): Query<Route>,
    JsonBody(edit): JsonBody<AspectEdit>,
) -> ApiResult<Response> {
    let handle = state.project(&pid)?;
    handle.snapshot().session(&sid)?;
    let svc = state.service.routed(route.provider.as_deref())?;
    if edit.derive {
        return Ok(spawn_job(&state, &pid, "derive-aspects", async move {
            mutate(&handle, move |p, _| svc.edit_aspects(p, &sid, &edit)).await
        }));
    }
    Ok(Json(mutate(&handle, move |p, _| svc.edit_aspects(p, &sid, &edit)).await?).into_response())
}

async fn session_scores(
    State(state): State<Shared>,
    UrlPath((pid, sid)): UrlPath<(String, String)>,
    Query(route): Query<Route>,
) -> ApiResult<Response> {
    let handle = state.project(&pid)?;
    handle.snapshot().session(&sid)?.assignment()?;
    let svc = state.service.routed(route.provider.as_deref())?;
    Ok(spawn_job(&state, &pid, "score-agents", async move {
        mutate(&handle, move |p, _| svc.score_session(p, &sid)).await
    }))
}

async fn ranking(
    State(state): State<Shared>,
    UrlPath((pid, sid)): UrlPath<(String, String)>,
) -> ApiResult<Json<Value>> {
    let p = state.project(&pid)?.snapshot();
    Ok(Json(json!(state.service.rank(&p, &sid)?)))
}

async fn list_runs(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
) -> ApiResult<Json<Value>> {
    let p = state.project(&pid)?.snapshot();
    let live: Vec<_> = lock(&state.runs)
        .values()
        .filter(|r| r.project_id == pid && lock(&r.log).outcome.is_none())
        .map(|r| r.run_id.clone())
        .collect();
    Ok(Json(json!({ "runs": p.runs, "live": live })))
}

async fn start_run(
    State(state): State<Shared>,
    UrlPath(pid): UrlPath<String>,
) -> ApiResult<Response> {
    let handle = state.project(&pid)?;
    let snapshot = handle.snapshot();
    state.service.check_runnable(snapshot.strategy())?;
    let version = snapshot.current_strategy.clone();
    if !lock(&state.active_runs).insert((pid.clone(), version.clone())) {
        return Err(ApiError::new(
            "run-in-progress",
            format!("strategy {version} is already running"),
        ));
    }
    let run_id = format!("run-{}", uuid::Uuid::new_v4().simple());
    let run = Arc::new(RunHandle::new(run_id.clone(), pid.clone()));
    lock(&state.runs).insert(run_id.clone(), run.clone());

    let task_state = state.clone();
    let task_run = run.clone();
    tokio::spawn(async move {
        let svc = task_state.service.clone();
        let sink = task_run.clone();
        let id = task_run.run_id.clone();
        let executed = blocking(move || {
            let mut scratch = Project::clone(&snapshot);
            svc.run(&mut scratch, None, &id, &mut |e| sink.push(e))
        })
        .await;
        let outcome = match executed {
            Ok(record) => {
                let saved = record.clone();
                mutate(&handle, move |p, path| {
                    Ok(workspace::record_run(p, path, &saved)?)
                })
                .await
                .map(|()| record)
            }
            Err(e) => Err(e),
        };
        task_run.finish(outcome);
        lock(&task_state.active_runs).remove(&(task_run.project_id.clone(), version));
    });

    let location = format!("{API_BASE}/runs/{run_id}");
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, location)],
        Json(json!({ "runId": run_id, "events": format!("{API_BASE}/runs/{run_id}/events") })),
    )
        .into_response())
}

async fn get_job(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<JobView>> {
    Ok(Json(state.job(&id)?.borrow().clone()))
}

/// Emits the job's state now and after every change; ends once it settles.
async fn job_events(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let rx = state.job(&id)?;
    let stream = stream::unfold((rx, true, false), |(mut rx, first, done)| async move {
        if done {
            return None;
        }
        if !first && rx.changed().await.is_err() {
            return None;
        }
        let view = rx.borrow_and_update().clone();
        let done = view.state != JobState::Running;
        let event = Event::default()
            .event("job")
            .data(serde_json::to_string(&view).unwrap_or_default());
        Some((Ok(event), (rx, false, done)))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

fn run_view(run: &RunHandle) -> RunView {
    let log = lock(&run.log);
    let (record, error) = match &log.outcome {
        Some(Ok(record)) => (record.clone(), None),
        Some(Err(e)) => (partial_record(run, &log.events), Some(e.clone())),
        None => (partial_record(run, &log.events), None),
    };
    RunView {
        run_id: run.run_id.clone(),
        project_id: run.project_id.clone(),
        done: log.outcome.is_some(),
        record,
        error,
    }
}

fn partial_record(run: &RunHandle, events: &[RunEvent]) -> ExecutionRecord {
    rebuild(events).unwrap_or_else(|_| {
        let mut r = ExecutionRecord::new(run.run_id.clone(), VersionId(String::new()));
        r.events = events.to_vec();
        r
    })
}

async fn get_run(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<RunView>> {
    Ok(Json(run_view(&*state.run(&id).await?)))
}

#[derive(Deserialize)]
struct EventsQuery {
    /// Resume after this sequence number (same as `Last-Event-ID`).
    after: Option<u64>,
}

fn sse_event(e: &RunEvent) -> Event {
    let data = serde_json::to_value(e).unwrap_or(Value::Null);
    let kind = data["type"].as_str().unwrap_or("event").to_string();
    Event::default()
        .id(e.seq.to_string())
        .event(kind)
        .data(data.to_string())
}

/// The run's log from the start (or after `Last-Event-ID`), then live
/// events as they are appended, ending when the run is over.
async fn run_events(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let run = state.run(&id).await?;
    let last = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .or(q.after);
    let cursor = last.map_or(0, |n| n as usize + 1);
    let rx = run.bump.subscribe();
    let stream = stream::unfold((run, rx, cursor), |(run, mut rx, cursor)| async move {
        loop {
            rx.borrow_and_update();
            {
                let log = lock(&run.log);
                if let Some(e) = log.events.get(cursor) {
                    let event = sse_event(e);
                    drop(log);
                    return Some((Ok(event), (run, rx, cursor + 1)));
                }
                if log.outcome.is_some() {
                    return None;
                }
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default().interval(Duration::from_secs(15))))
}

fn finished_record(run: &RunHandle) -> Result<ExecutionRecord, ApiError> {
    match &lock(&run.log).outcome {
        Some(Ok(record)) => Ok(record.clone()),
        Some(Err(e)) => Err(e.clone()),
        None => Err(ApiError::new(
            "run-in-progress",
            format!("run {} has not finished", run.run_id),
        )),
    }
}

#[derive(Deserialize)]
struct TraceQuery {
    node: Option<String>,
}

async fn get_trace(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<TraceQuery>,
) -> ApiResult<Json<Value>> {
    let run = state.run(&id).await?;
    let record = finished_record(&run)?;
    let project = state.project(&run.project_id)?.snapshot();
    let strategy = service::record_strategy(&project, &record)?;
    match q.node {
        Some(node) => Ok(Json(json!(service::trace(&record, strategy, &node)?))),
        None => Ok(Json(json!({
            "graph": coordkit_core::runtime::build_trace(&record, strategy).map_err(ApiError::from)?
        }))),
    }
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export_run(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let format: ExportFormat = q
        .format
        .as_deref()
        .unwrap_or("json")
        .parse()
        .map_err(|e: String| ApiError::bad_request(e).at("format"))?;
    let run = state.run(&id).await?;
    let record = finished_record(&run)?;
    let project = state.project(&run.project_id)?.snapshot();
    let strategy = service::record_strategy(&project, &record)?;
    let content_type = match format {
        ExportFormat::Json => "application/json",
        ExportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    Ok((
        [(header::CONTENT_TYPE, content_type)],
        workspace::export_result(&record, strategy, format),
    )
        .into_response())
}

/// Serves until Ctrl-C. With `preload` that project is opened first.
pub async fn serve(config: &Config, preload: Option<&Path>) -> Result<(), ApiError> {
    let (gateway, provider) = build_gateway(config)?;
    let state = AppState::new(
        Service::new(gateway, provider, config.seed),
        config.data_dir.clone(),
    );
    if let Some(path) = preload {
        let id = state.open_project(path).await?;
        eprintln!("opened project {id} ({})", path.display());
    }
    let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port))
        .await
        .map_err(|e| {
            ApiError::new(
                "io-error",
                format!("bind {}:{}: {e}", config.host, config.port),
            )
        })?;
    let addr = listener
        .local_addr()
        .map_err(|e| ApiError::new("io-error", e.to_string()))?;
    eprintln!("listening on http://{addr}{API_BASE}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ApiError::new("io-error", e.to_string()))
}
