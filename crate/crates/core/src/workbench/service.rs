//! Local HTTP API. All bodies are JSON; errors are `{code, message}`.
//!
//! | method | path                       | body / query                               |
//! |--------|----------------------------|--------------------------------------------|
//! | GET    | `/api/model`               | `?rev=N` (default: current revision)       |
//! | POST   | `/api/check`               | `{source?, name?, rev?}`                   |
//! | POST   | `/api/sessions`            | `{root, source?, name?, rev?}`             |
//! | POST   | `/api/sessions/{id}/input` | `{line}`                                   |
//! | GET    | `/api/sessions/{id}`       |                                            |
//! | GET    | `/api/events`              | `?from=N&follow=true|false` (server-sent)  |
//!
//! A request carrying `source` works on that text; otherwise the model is
//! checked out of the repository.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::future::{Future, IntoFuture};
use std::net::{Ipv4Addr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json_};

use crate::model::DesignModel;
use crate::prototyper::{Frame, Limits, PrototypeError, Session, Status, TranscriptEvent};
use crate::repository::{RepoError, RepoStore};

use super::{announce, check_event, parse_source, session_end_event, CheckReport, WorkbenchConfig, WorkbenchError};

pub const SESSION_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_string(), message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

impl From<RepoError> for ApiError {
    fn from(e: RepoError) -> Self {
        let status = match e {
            RepoError::NoSuchRevision { .. } => StatusCode::NOT_FOUND,
            RepoError::NotLocked { .. } | RepoError::Busy { .. } | RepoError::NotHolder { .. } => StatusCode::CONFLICT,
            RepoError::MalformedDoc(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<PrototypeError> for ApiError {
    fn from(e: PrototypeError) -> Self {
        let status = match e {
            PrototypeError::NoSuchDiagram(_) => StatusCode::NOT_FOUND,
            PrototypeError::SessionNotRunning(_) => StatusCode::CONFLICT,
            PrototypeError::ModelHasErrors(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Entry {
    id: String,
    session: Session,
    last_used: Instant,
}

/// Shared service state: the repository handle and the live sessions.
pub struct AppState {
    repo: RepoStore,
    limits: Limits,
    idle_timeout: Duration,
    next_id: AtomicU64,
    sessions: Mutex<HashMap<String, Arc<Mutex<Entry>>>>,
}

impl AppState {
    pub fn new(repo: RepoStore, limits: Limits) -> Arc<Self> {
        Self::with_idle_timeout(repo, limits, SESSION_IDLE_TIMEOUT)
    }

    pub fn with_idle_timeout(repo: RepoStore, limits: Limits, idle_timeout: Duration) -> Arc<Self> {
        Arc::new(Self { repo, limits, idle_timeout, next_id: AtomicU64::new(1), sessions: Mutex::new(HashMap::new()) })
    }

    pub fn repo(&self) -> &RepoStore {
        &self.repo
    }

    /// Drops sessions idle for longer than the timeout. Returns how many.
    pub fn expire_idle(&self) -> usize {
        let mut map = self.sessions.lock().expect("session map");
        let before = map.len();
        map.retain(|_, e| e.lock().map(|e| e.last_used.elapsed() < self.idle_timeout).unwrap_or(false));
        before - map.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Entry>>> {
        self.expire_idle();
        self.sessions
            .lock()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NO_SUCH_SESSION", format!("no session `{id}`")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/model", get(get_model))
        .route("/api/check", post(post_check))
        .route("/api/sessions", post(post_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/input", post(post_input))
        .route("/api/events", get(get_events))
        .with_state(state)
}

/// Binds `127.0.0.1:port` and returns the server future. `on_bound` is
/// called with the bound address before the future is returned.
pub async fn serve(
    config: WorkbenchConfig,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<impl Future<Output = std::io::Result<()>>, WorkbenchError> {
    config.validate()?;
    let repo = RepoStore::open(&config.repo_root)?;
    let listener = match tokio::net::TcpListener::bind((Ipv4Addr::LOCALHOST, config.listen_port)).await {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => return Err(WorkbenchError::PortInUse(config.listen_port)),
        Err(e) => return Err(e.into()),
    };
    on_bound(listener.local_addr()?);
    let state = AppState::new(repo, config.limits);
    let reaper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            reaper.expire_idle();
        }
    });
    Ok(axum::serve(listener, router(state)).into_future())
}

#[derive(Debug, Default, Deserialize)]
struct RevQuery {
    rev: Option<u64>,
}

fn current_or(repo: &RepoStore, rev: Option<u64>) -> ApiResult<u64> {
    match rev {
        Some(r) => Ok(r),
        None => Ok(repo.current_revision()?),
    }
}

async fn get_model(State(st): State<Arc<AppState>>, q: Result<Query<RevQuery>, QueryRejection>) -> ApiResult<Json<Json_>> {
    let Query(q) = q?;
    let rev = current_or(&st.repo, q.rev)?;
    Ok(Json(st.repo.export_value(rev)?))
}

#[derive(Debug, Default, Deserialize)]
struct ModelSource {
    source: Option<String>,
    name: Option<String>,
    rev: Option<u64>,
}

fn resolve_model(st: &AppState, src: &ModelSource) -> ApiResult<DesignModel> {
    match &src.source {
        Some(text) => {
            let name = src.name.as_deref().unwrap_or("request.use");
            parse_source(text, name).map_err(|errs| {
                let code = errs.first().map(|e| e.code.as_str()).unwrap_or("PARSE_ERROR");
                let message = errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n");
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
            })
        }
        None => {
            let rev = current_or(&st.repo, src.rev)?;
            Ok(st.repo.checkout(rev)?)
        }
    }
}

async fn post_check(
    State(st): State<Arc<AppState>>,
    body: Result<Json<ModelSource>, JsonRejection>,
) -> ApiResult<Json<CheckReport>> {
    let Json(src) = body?;
    let model = resolve_model(&st, &src)?;
    let report = CheckReport::of(&model);
    announce(Some(&st.repo), check_event(&model, &report));
    Ok(Json(report))
}

#[derive(Debug, Deserialize)]
struct NewSession {
    root: String,
    #[serde(flatten)]
    model: ModelSource,
}

/// Full state of a session as returned by the API.
#[derive(Debug, Serialize)]
pub struct SessionView {
    pub id: String,
    pub root: String,
    pub diagram: String,
    pub current: String,
    pub status: Status,
    pub step_count: u64,
    pub frames: Vec<Frame>,
    pub bindings: BTreeMap<String, String>,
    pub transcript: Vec<TranscriptEvent>,
}

fn view(e: &Entry) -> SessionView {
    let s = &e.session;
    SessionView {
        id: e.id.clone(),
        root: s.root().to_string(),
        diagram: s.diagram().to_string(),
        current: s.current().to_string(),
        status: s.status(),
        step_count: s.step_count(),
        frames: s.frames().to_vec(),
        bindings: s.bindings().clone(),
        transcript: s.transcript().to_vec(),
    }
}

async fn post_session(
    State(st): State<Arc<AppState>>,
    body: Result<Json<NewSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(req) = body?;
    let model = resolve_model(&st, &req.model)?;
    let session = Session::start_with_limits(&model, &req.root, st.limits)?;
    if session.status() != Status::Running {
        announce(Some(&st.repo), session_end_event(&session));
    }
    let id = format!("s{}", st.next_id.fetch_add(1, Ordering::SeqCst));
    let entry = Entry { id: id.clone(), session, last_used: Instant::now() };
    let v = view(&entry);
    st.expire_idle();
    st.sessions.lock().expect("session map").insert(id, Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(v)))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let entry = st.session(&id)?;
    let mut e = entry.lock().expect("session");
    e.last_used = Instant::now();
    Ok(Json(view(&e)))
}

#[derive(Debug, Deserialize)]
struct InputBody {
    line: String,
}

#[derive(Debug, Serialize)]
pub struct InputResult {
    pub events: Vec<TranscriptEvent>,
    pub status: Status,
    pub diagram: String,
    pub current: String,
}

async fn post_input(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<InputBody>, JsonRejection>,
) -> ApiResult<Json<InputResult>> {
    let Json(req) = body?;
    let entry = st.session(&id)?;
    let mut e = entry.lock().expect("session");
    e.last_used = Instant::now();
    let before = e.session.transcript().len();
    e.session.input(&req.line)?;
    let s = &e.session;
    if s.status() != Status::Running {
        announce(Some(&st.repo), session_end_event(s));
    }
    Ok(Json(InputResult {
        events: s.transcript()[before..].to_vec(),
        status: s.status(),
        diagram: s.diagram().to_string(),
        current: s.current().to_string(),
    }))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    from: Option<u64>,
    follow: Option<bool>,
}

/// Server-sent events: one SSE message per log event, `id` = seq and
/// `data` = the log line.
async fn get_events(
    State(st): State<Arc<AppState>>,
    q: Result<Query<EventsQuery>, QueryRejection>,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let Query(q) = q?;
    let from = q.from.unwrap_or(1);
    if from == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", "from must be at least 1"));
    }
    let follow = q.follow.unwrap_or(true);
    let tail = st.repo.events().tail(from);
    let s = stream::unfold(Some(tail), move |tail| async move {
        let mut tail = tail?;
        loop {
            match tail.try_next() {
                Ok(Some(ev)) => {
                    let msg = SseEvent::default().id(ev.seq.to_string()).data(ev.to_line());
                    return Some((Ok(msg), Some(tail)));
                }
                Ok(None) if follow => tokio::time::sleep(Duration::from_millis(50)).await,
                Ok(None) => return None,
                Err(e) => return Some((Ok(SseEvent::default().event("error").data(e.to_string())), None)),
            }
        }
    });
    Ok(Sse::new(s).keep_alive(KeepAlive::default()))
}
