//! HTTP session service with a server-sent event stream per session.
//!
//! Routes:
//! - `POST /sessions` creates a session from `{config, mode?, cadence_ms?}`
//! - `GET /sessions/{id}` session info
//! - `POST /sessions/{id}/step` trains one window
//! - `POST /sessions/{id}/interventions` submits `{node, label}`
//! - `GET /sessions/{id}/events` event stream; resumes after `Last-Event-ID`
//!   or from `?from=<index>`
//! - `GET /sessions/{id}/snapshot` latest snapshot; `?learner=true` adds the
//!   learner tables
//!
//! Errors are JSON `{code, reason}`.

mod session;

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use pqroute_core::operator::{Label, LiveCommand, LiveLabel, ScriptEntry, ScriptMark};
use pqroute_core::sim::{Experiment, OperatorMode};
use serde::{Deserialize, Serialize};

use crate::config::{describe, ConfigError, ScenarioConfig};

pub use session::{
    Ack, EventBody, EventLog, NodeStatus, NodeView, Session, SessionEvent, SessionInfo, Snapshot, Status, StepError,
    StepMode, SubmitError,
};

#[derive(Debug, Clone, Default)]
pub struct GatewayConfig {
    /// Relative topology, event and script paths resolve against this.
    pub base_dir: PathBuf,
    /// Per-session event logs go here as `session-<id>.ndjson`.
    pub log_dir: Option<PathBuf>,
}

pub struct Gateway {
    cfg: GatewayConfig,
    sessions: RwLock<BTreeMap<u64, Arc<Session>>>,
    next_id: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub config: ScenarioConfig,
    #[serde(default = "manual")]
    pub mode: StepMode,
    /// Pause between automatic steps.
    #[serde(default = "default_cadence")]
    pub cadence_ms: u64,
}

fn manual() -> StepMode {
    StepMode::Manual
}

fn default_cadence() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub reason: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, reason: impl ToString) -> Self {
        ApiError { status, code, reason: reason.to_string() }
    }

    fn not_found(id: u64) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code.into(), reason: self.reason.clone() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

impl From<StepError> for ApiError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Busy => Self::new(StatusCode::CONFLICT, "busy", "a window is already training"),
            StepError::Finished => Self::new(StatusCode::GONE, "finished", "session has finished"),
            StepError::Failed(e) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "runtime", e),
        }
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::Finished => Self::new(StatusCode::GONE, "finished", "session has finished"),
            SubmitError::Rejected(e) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "rejected", e),
        }
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", e)
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e))
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Arc<Self> {
        Arc::new(Gateway { cfg, sessions: RwLock::default(), next_id: AtomicU64::new(1) })
    }

    pub fn session(&self, id: u64) -> Result<Arc<Session>, ApiError> {
        let map = self.sessions.read().unwrap_or_else(|p| p.into_inner());
        map.get(&id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    pub fn create(self: &Arc<Self>, req: CreateSession) -> Result<Arc<Session>, ApiError> {
        if req.config.operator.mode == OperatorMode::None {
            return Err(ConfigError::Invalid {
                field: "operator.mode",
                reason: "sessions need operator mode live or scripted".into(),
            }
            .into());
        }
        let scenario = req.config.resolve(&self.cfg.base_dir)?;
        let exp = Experiment::new(scenario).map_err(describe)?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let log = self.cfg.log_dir.as_ref().map(|d| d.join(format!("session-{id}.ndjson")));
        let session = Session::new(id, req.config, exp, req.mode, log.as_deref())
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e))?;
        let session = Arc::new(session);
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).insert(id, session.clone());
        if req.mode == StepMode::Auto {
            tokio::spawn(auto_step(session.clone(), Duration::from_millis(req.cadence_ms)));
        }
        Ok(session)
    }
}

async fn auto_step(session: Arc<Session>, cadence: Duration) {
    loop {
        tokio::time::sleep(cadence).await;
        let s = session.clone();
        match tokio::task::spawn_blocking(move || s.step()).await {
            Ok(Ok(_)) | Ok(Err(StepError::Busy)) => {}
            _ => break,
        }
    }
}

pub async fn step(session: Arc<Session>) -> Result<pqroute_core::sim::WindowResult, ApiError> {
    tokio::task::spawn_blocking(move || session.step())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "runtime", e))?
        .map_err(ApiError::from)
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/step", post(step_session))
        .route("/sessions/{id}/interventions", post(submit_intervention))
        .route("/sessions/{id}/events", get(stream_events))
        .route("/sessions/{id}/snapshot", get(get_snapshot))
        .with_state(gw)
}

pub async fn serve(listener: tokio::net::TcpListener, gw: Arc<Gateway>) -> std::io::Result<()> {
    axum::serve(listener, router(gw)).await
}

async fn create_session(State(gw): State<Arc<Gateway>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let session = gw.create(req)?;
    Ok((StatusCode::CREATED, Json(session.info())).into_response())
}

async fn get_session(State(gw): State<Arc<Gateway>>, Path(id): Path<u64>) -> Result<Json<SessionInfo>, ApiError> {
    Ok(Json(gw.session(id)?.info()))
}

async fn step_session(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<u64>,
) -> Result<Json<pqroute_core::sim::WindowResult>, ApiError> {
    Ok(Json(step(gw.session(id)?).await?))
}

async fn submit_intervention(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<u64>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let session = gw.session(id)?;
    let cmd: LiveCommand = parse_body(&body)?;
    let ack = session.submit(cmd)?;
    Ok((StatusCode::ACCEPTED, Json(ack)).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct SnapshotQuery {
    #[serde(default)]
    learner: bool,
}

async fn get_snapshot(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<u64>,
    Query(q): Query<SnapshotQuery>,
) -> Result<Response, ApiError> {
    let session = gw.session(id)?;
    let snap = session.snapshot();
    if q.learner {
        let mut v = serde_json::to_value(&*snap).expect("snapshot serializes");
        v["learner"] = serde_json::to_value(&*session.learner_snapshot()).expect("tables serialize");
        return Ok(Json(v).into_response());
    }
    Ok(Json((*snap).clone()).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct EventsQuery {
    from: Option<u64>,
}

fn to_sse(ev: &SessionEvent) -> Event {
    Event::default()
        .event(ev.body.kind())
        .id(ev.index.to_string())
        .data(serde_json::to_string(ev).expect("event serializes"))
}

/// Events from index `from` on; ends once the log is closed and drained.
pub fn event_stream(session: Arc<Session>, from: u64) -> impl Stream<Item = Arc<SessionEvent>> {
    let rx = session.events().watch();
    stream::unfold((session, rx, from), |(session, mut rx, next)| async move {
        loop {
            match session.events().get(next) {
                Ok(ev) => return Some((ev, (session, rx, next + 1))),
                Err(true) => return None,
                Err(false) => {
                    if rx.changed().await.is_err() {
                        return None;
                    }
                }
            }
        }
    })
}

async fn stream_events(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<u64>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Response {
    let session = match gw.session(id) {
        Ok(s) => s,
        Err(e) => {
            let frame = Event::default().event("error").data(serde_json::to_string(&e.body()).unwrap_or_default());
            let body = Sse::new(stream::iter([Ok::<_, Infallible>(frame)]));
            return (StatusCode::NOT_FOUND, body).into_response();
        }
    };
    let last_seen =
        headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse::<u64>().ok());
    let from = last_seen.map(|i| i + 1).or(q.from).unwrap_or(0);
    let events = event_stream(session, from).map(|ev| Ok::<_, Infallible>(to_sse(&ev)));
    Sse::new(events).keep_alive(KeepAlive::default()).into_response()
}

/// Turns the interventions recorded in a session event log into a script,
/// one entry per command in log order. Commands that landed mid-window in
/// action pruning replay from the start of that window.
pub fn script_from_events<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Vec<ScriptEntry> {
    events
        .into_iter()
        .filter_map(|ev| match ev.body {
            EventBody::InterventionApplied { window, command, .. } => Some(match command.label {
                LiveLabel::Clear => ScriptEntry { window, mark: Vec::new(), unmark: vec![command.node] },
                LiveLabel::Dangerous => ScriptEntry {
                    window,
                    mark: vec![ScriptMark { node: command.node, label: Label::Dangerous }],
                    unmark: Vec::new(),
                },
                LiveLabel::Safe => ScriptEntry {
                    window,
                    mark: vec![ScriptMark { node: command.node, label: Label::Safe }],
                    unmark: Vec::new(),
                },
            }),
            _ => None,
        })
        .collect()
}
