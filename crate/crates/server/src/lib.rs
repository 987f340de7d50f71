//! HTTP API over elicitation sessions.
//!
//! Every mutation of a session goes through that session's mutex, so
//! requests for one session are serialized while different sessions proceed
//! independently. The server never advances a session on its own: state only
//! changes in response to a POST.
//!
//! | method | path | body | returns |
//! |---|---|---|---|
//! | POST | `/sessions` | [`CreateSession`] | 201 [`Created`] |
//! | GET | `/sessions` | | list of [`Summary`] |
//! | GET | `/sessions/{id}` | | [`Summary`] |
//! | GET | `/sessions/{id}/next` | | [`Step`] |
//! | POST | `/sessions/{id}/responses` | [`Submission`] | next [`Step`] |
//! | GET | `/sessions/{id}/bounds` | | [`Bounds`] |
//! | GET | `/sessions/{id}/log` | `?normalized=true` | JSONL |
//! | POST | `/sessions/{id}/suspend` | | [`Summary`] |
//! | POST | `/sessions/{id}/resume` | | [`Summary`] |
//!
//! Errors come back as `{"error": code, "message": text}`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use elicit_core::bounds::{ConflictEvent, UtilityInterval};
use elicit_core::config::{ConfigError, StudyConfig};
use elicit_core::outcome::Outcome;
use elicit_core::protocol::ProtocolKind;
use elicit_core::rng;
use elicit_core::session::{Phase, Session, SessionError, Step, Submission};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::services::ServeDir;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("no session {0:?}")]
    NotFound(String),
    #[error("session {0:?} already exists")]
    Duplicate(String),
    #[error("unknown config {0:?}")]
    UnknownConfig(String),
    #[error("invalid session id {0:?}: use letters, digits, '-' and '_'")]
    BadId(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("persisting {path}: {source}")]
    Persist { path: PathBuf, source: std::io::Error },
}

impl ApiError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Duplicate(_) => (StatusCode::CONFLICT, "duplicate_id"),
            ApiError::UnknownConfig(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_config"),
            ApiError::BadId(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_id"),
            ApiError::Config(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
            ApiError::Session(e) => match e {
                SessionError::Exhausted => (StatusCode::GONE, "exhausted"),
                SessionError::Suspended => (StatusCode::CONFLICT, "suspended"),
                SessionError::NotSuspended => (StatusCode::CONFLICT, "not_suspended"),
                SessionError::ProtocolViolation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "protocol_violation"),
                SessionError::InvalidSettings(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_settings"),
                SessionError::Task(_) | SessionError::Query(_) | SessionError::Bounds(_) => {
                    (StatusCode::INTERNAL_SERVER_ERROR, "internal")
                }
            },
            ApiError::Persist { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "persistence"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        (status, Json(ErrorBody { error: code.to_string(), message: self.to_string() })).into_response()
    }
}

/// Body of `POST /sessions`. Every field is optional: the id defaults to a
/// fresh `session-NNNN`, the protocol and seed to the config's.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub id: Option<String>,
    /// Name of a registered config; the server's default when absent.
    pub config: Option<String>,
    pub protocol: Option<ProtocolKind>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub config: String,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub phase: Phase,
    pub step: Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub id: String,
    pub protocol: ProtocolKind,
    pub phase: Phase,
    pub queries: u32,
    pub converged: usize,
    pub outcomes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub intervals: BTreeMap<Outcome, UtilityInterval>,
    pub midpoints: BTreeMap<Outcome, f64>,
    pub termination_width: f64,
    pub conflicts: Vec<ConflictEvent>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct LogParams {
    #[serde(default)]
    pub normalized: bool,
}

struct Entry {
    session: Session,
    /// Log records already appended to disk.
    persisted: usize,
}

/// Shared server state: registered configs and live sessions.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    default_config: String,
    configs: BTreeMap<String, StudyConfig>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    log_dir: Option<PathBuf>,
    ui_dir: Option<PathBuf>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// FNV-1a, for deriving a default seed from a session id.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl AppState {
    /// A server whose default config is `config`, registered under its
    /// study name.
    pub fn new(config: StudyConfig) -> Result<Self, ApiError> {
        config.validate()?;
        let name = config.study.name.clone();
        Ok(Self {
            inner: Arc::new(Inner {
                default_config: name.clone(),
                configs: BTreeMap::from([(name, config)]),
                sessions: RwLock::new(HashMap::new()),
                log_dir: None,
                ui_dir: None,
            }),
        })
    }

    fn inner_mut(&mut self) -> &mut Inner {
        Arc::get_mut(&mut self.inner).expect("state is configured before it is shared")
    }

    /// Registers another config that clients may name in `POST /sessions`.
    pub fn with_config(mut self, config: StudyConfig) -> Result<Self, ApiError> {
        config.validate()?;
        self.inner_mut().configs.insert(config.study.name.clone(), config);
        Ok(self)
    }

    /// Persists logs to `<dir>/<id>.jsonl` and snapshots of suspended or
    /// finished sessions to `<dir>/<id>.session.json`. Existing snapshots are
    /// loaded, so suspended sessions survive a restart.
    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let dir = dir.into();
        let persist = |source| ApiError::Persist { path: dir.clone(), source };
        std::fs::create_dir_all(&dir).map_err(persist)?;
        let mut restored = HashMap::new();
        for entry in std::fs::read_dir(&dir).map_err(persist)? {
            let path = entry.map_err(persist)?.path();
            let is_snapshot = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".session.json"));
            if !is_snapshot {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| ApiError::Persist { path: path.clone(), source })?;
            let session: Session = serde_json::from_str(&text).map_err(|e| ApiError::Persist {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })?;
            let persisted = session.log().len();
            restored.insert(session.id().to_string(), Arc::new(Mutex::new(Entry { session, persisted })));
        }
        let inner = self.inner_mut();
        inner.sessions = RwLock::new(restored);
        inner.log_dir = Some(dir);
        Ok(self)
    }

    /// Serves static files from `dir` for any path the API does not claim.
    pub fn with_ui_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.inner_mut().ui_dir = Some(dir.into());
        self
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.inner.sessions.read().expect("session map lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    fn create(&self, req: CreateSession) -> Result<Created, ApiError> {
        let config_name = req.config.unwrap_or_else(|| self.inner.default_config.clone());
        let config = self.inner.configs.get(&config_name).ok_or_else(|| ApiError::UnknownConfig(config_name.clone()))?;
        let protocol = req.protocol.unwrap_or(config.study.protocol);
        let mut sessions = self.inner.sessions.write().expect("session map lock");
        let id = match req.id {
            Some(id) if !valid_id(&id) => return Err(ApiError::BadId(id)),
            Some(id) if sessions.contains_key(&id) => return Err(ApiError::Duplicate(id)),
            Some(id) => id,
            None => (sessions.len() + 1..)
                .map(|n| format!("session-{n:04}"))
                .find(|id| !sessions.contains_key(id))
                .expect("an unused id exists"),
        };
        let seed = req.seed.unwrap_or_else(|| rng::derive(config.study.seed, fnv1a(&id)));
        let settings = config.session_settings(protocol, seed)?;
        let session = Session::create(id.clone(), settings)?;
        let mut entry = Entry { session, persisted: 0 };
        self.persist(&mut entry)?;
        let created = Created {
            id: id.clone(),
            config: config_name,
            protocol,
            seed,
            phase: entry.session.phase(),
            step: entry.session.next_step()?,
        };
        sessions.insert(id, Arc::new(Mutex::new(entry)));
        Ok(created)
    }

    /// Appends new log records and, for sessions at rest, writes a snapshot.
    fn persist(&self, entry: &mut Entry) -> Result<(), ApiError> {
        let Some(dir) = &self.inner.log_dir else {
            return Ok(());
        };
        let session = &entry.session;
        let log_path = dir.join(format!("{}.jsonl", session.id()));
        let fail = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ApiError::Persist { path, source }
        };
        let records = &session.log().records()[entry.persisted..];
        if !records.is_empty() {
            let mut text = String::new();
            for r in records {
                text.push_str(&serde_json::to_string(r).expect("log records serialize"));
                text.push('\n');
            }
            let mut file =
                std::fs::OpenOptions::new().create(true).append(true).open(&log_path).map_err(fail(&log_path))?;
            file.write_all(text.as_bytes()).map_err(fail(&log_path))?;
            entry.persisted = session.log().len();
        }
        let snapshot = dir.join(format!("{}.session.json", session.id()));
        if matches!(session.phase(), Phase::Suspended | Phase::Done) {
            let json = serde_json::to_string(session).expect("sessions serialize");
            std::fs::write(&snapshot, json).map_err(fail(&snapshot))?;
        } else if snapshot.exists() {
            std::fs::remove_file(&snapshot).map_err(fail(&snapshot))?;
        }
        Ok(())
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, SessionError>) -> Result<T, ApiError> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock().expect("session lock");
        let out = f(&mut guard.session)?;
        self.persist(&mut guard)?;
        Ok(out)
    }

    fn read_session<T>(&self, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, ApiError> {
        let entry = self.entry(id)?;
        let guard = entry.lock().expect("session lock");
        Ok(f(&guard.session))
    }
}

fn summary(s: &Session) -> Summary {
    Summary {
        id: s.id().to_string(),
        protocol: s.settings().protocol.kind,
        phase: s.phase(),
        queries: s.queries_issued(),
        converged: s.converged_count(),
        outcomes: s.state().intervals().len(),
    }
}

async fn create_session(State(app): State<AppState>, body: Option<Json<CreateSession>>) -> Result<Response, ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let created = app.create(req)?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn list_sessions(State(app): State<AppState>) -> Result<Json<Vec<Summary>>, ApiError> {
    app.session_ids().iter().map(|id| app.read_session(id, summary)).collect::<Result<_, _>>().map(Json)
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Summary>, ApiError> {
    app.read_session(&id, summary).map(Json)
}

async fn next_step(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Step>, ApiError> {
    Ok(Json(app.read_session(&id, Session::next_step)??))
}

async fn submit(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(submission): Json<Submission>,
) -> Result<Json<Step>, ApiError> {
    app.with_session(&id, |s| {
        s.submit(submission)?;
        s.next_step()
    })
    .map(Json)
}

async fn bounds(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Bounds>, ApiError> {
    app.read_session(&id, |s| Bounds {
        intervals: s.state().intervals().clone(),
        midpoints: s.state().midpoint_utility().values().clone(),
        termination_width: s.settings().termination_width,
        conflicts: s.state().conflicts().to_vec(),
    })
    .map(Json)
}

async fn log(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<LogParams>,
) -> Result<Response, ApiError> {
    let text = app.read_session(&id, |s| {
        if params.normalized {
            s.log().normalized().to_jsonl()
        } else {
            s.log().to_jsonl()
        }
    })?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn suspend(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Summary>, ApiError> {
    app.with_session(&id, |s| s.suspend().map(|()| summary(s))).map(Json)
}

async fn resume(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Summary>, ApiError> {
    app.with_session(&id, |s| s.resume().map(|()| summary(s))).map(Json)
}

pub fn router(state: AppState) -> Router {
    let ui = state.inner.ui_dir.clone();
    let api = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next_step))
        .route("/sessions/{id}/responses", post(submit))
        .route("/sessions/{id}/bounds", get(bounds))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/suspend", post(suspend))
        .route("/sessions/{id}/resume", post(resume))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
