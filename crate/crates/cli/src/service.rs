//! HTTP + JSON session API with server-sent events, consumed by the browser
//! console.
//!
//! Routes:
//! - `POST /api/sessions` `{text?, image?: {name, media_type, data_base64}, xml?}`
//! - `GET  /api/sessions`, `GET /api/sessions/{id}`
//! - `GET  /api/sessions/{id}/transcript` (JSON lines)
//! - `POST /api/sessions/{id}/actions` with an action body, or
//!   `{"action": "postproc", "text": ...}`
//! - `GET  /api/sessions/{id}/events?since=N` (SSE; backlog after seq N, then live)
//! - `GET  /api/sessions/{id}/artifacts/{path}`
//! - `GET  /api/tools`, `GET /api/health`

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use sphflow_core::orchestrator::{
    Action, Attachment, Event, EventKind, InputEnvelope, Phase, Session, SessionConfig, SessionError, SkillContext,
};
use sphflow_core::postproc::registry::descriptors;
use tokio::sync::broadcast;

use crate::PlannerFactory;

struct Inner {
    session: Session,
    published: usize,
}

impl Inner {
    fn publish(&mut self, tx: &broadcast::Sender<Event>) {
        for e in &self.session.transcript()[self.published..] {
            let _ = tx.send(e.clone());
        }
        self.published = self.session.transcript().len();
    }
}

struct Slot {
    inner: Mutex<Inner>,
    tx: broadcast::Sender<Event>,
}

impl Slot {
    fn with<T>(&self, f: impl FnOnce(&mut Session) -> T) -> T {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let out = f(&mut inner.session);
        inner.publish(&self.tx);
        out
    }
}

pub struct AppState {
    root: PathBuf,
    factory: PlannerFactory,
    config: SessionConfig,
    sessions: Mutex<BTreeMap<String, Arc<Slot>>>,
    next: AtomicU64,
}

impl AppState {
    pub fn new(root: PathBuf, factory: PlannerFactory, config: SessionConfig) -> Arc<Self> {
        Arc::new(Self {
            root,
            factory,
            config,
            sessions: Mutex::new(BTreeMap::new()),
            next: AtomicU64::new(1),
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no session '{id}'")))
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::EmptyEnvelope => StatusCode::BAD_REQUEST,
            SessionError::Rejected { .. } => StatusCode::CONFLICT,
            SessionError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self(status, e.to_string())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/api/tools", get(|| async { Json(descriptors()) }))
        .route("/api/sessions", post(create).get(list))
        .route("/api/sessions/{id}", get(snapshot))
        .route("/api/sessions/{id}/transcript", get(transcript))
        .route("/api/sessions/{id}/actions", post(action))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/artifacts/{*path}", get(artifact))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
struct ImageBody {
    #[serde(default)]
    name: String,
    #[serde(default)]
    media_type: String,
    data_base64: String,
}

#[derive(Debug, Deserialize)]
struct CreateBody {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    image: Option<ImageBody>,
    #[serde(default)]
    xml: Option<String>,
}

async fn create(State(st): State<Arc<AppState>>, Json(body): Json<CreateBody>) -> Result<Response, ApiError> {
    let image = match body.image {
        Some(img) => {
            let data = base64::engine::general_purpose::STANDARD
                .decode(img.data_base64.as_bytes())
                .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("image data: {e}")))?;
            Some(Attachment::new(&img.name, &img.media_type, data))
        }
        None => None,
    };
    let envelope = InputEnvelope {
        text: body.text,
        image,
        xml: body.xml,
    };
    if envelope.is_empty() {
        return Err(SessionError::EmptyEnvelope.into());
    }
    let id = format!("s{:04}", st.next.fetch_add(1, Ordering::SeqCst));
    let st2 = st.clone();
    let id2 = id.clone();
    let session = blocking(move || {
        Session::start(
            &id2,
            &st2.root.join(&id2),
            envelope,
            (st2.factory)(),
            st2.config.clone(),
            SkillContext::builtin(),
        )
    })
    .await??;
    let snap = session.snapshot();
    let (tx, _) = broadcast::channel(1024);
    let published = session.transcript().len();
    let slot = Arc::new(Slot {
        inner: Mutex::new(Inner { session, published }),
        tx,
    });
    st.sessions.lock().unwrap_or_else(|p| p.into_inner()).insert(id, slot);
    Ok((StatusCode::CREATED, Json(snap)).into_response())
}

async fn list(State(st): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let slots: Vec<Arc<Slot>> = st.sessions.lock().unwrap_or_else(|p| p.into_inner()).values().cloned().collect();
    let rows = blocking(move || {
        slots
            .iter()
            .map(|s| {
                s.with(|s| {
                    json!({
                        "id": s.id,
                        "phase": s.phase(),
                        "hitl_rounds": s.hitl_rounds(),
                        "converged": s.converged(),
                        "events": s.transcript().len(),
                    })
                })
            })
            .collect::<Vec<_>>()
    })
    .await?;
    Ok(Json(Value::Array(rows)))
}

async fn snapshot(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = st.slot(&id)?;
    let snap = blocking(move || slot.with(|s| s.snapshot())).await?;
    Ok(Json(snap).into_response())
}

async fn transcript(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = st.slot(&id)?;
    let text = blocking(move || slot.with(|s| s.transcript_jsonl())).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

fn spawn_run(slot: Arc<Slot>) {
    std::thread::spawn(move || {
        let Ok(job) = slot.with(|s| s.begin_run()) else { return };
        let result = job.execute(|p| {
            slot.with(|s| {
                let _ = s.record_progress(p);
            })
        });
        slot.with(|s| {
            let _ = s.finish_run(&job, result);
        });
    });
}

async fn action(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<Value>,
) -> Result<Response, ApiError> {
    let slot = st.slot(&id)?;
    enum Request {
        Turn(Action),
        Postproc(String),
    }
    let request = if body.get("action").and_then(Value::as_str) == Some("postproc") {
        let text = body
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "postproc needs text".into()))?;
        Request::Postproc(text.to_string())
    } else {
        Request::Turn(serde_json::from_value(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("action: {e}")))?)
    };
    let worker = slot.clone();
    let snap = blocking(move || {
        worker.with(|s| {
            match request {
                Request::Turn(a) => s.hitl_turn(a)?,
                Request::Postproc(t) => s.postproc_request(&t)?,
            }
            Ok::<_, SessionError>(s.snapshot())
        })
    })
    .await??;
    if snap.phase == Phase::Simulating {
        spawn_run(slot);
    }
    Ok(Json(snap).into_response())
}

#[derive(Debug, Deserialize)]
struct Since {
    since: Option<u64>,
}

fn sse_event(e: &Event) -> SseEvent {
    let v = serde_json::to_value(e).unwrap_or(Value::Null);
    let name = v.get("type").and_then(Value::as_str).unwrap_or("event").to_string();
    SseEvent::default().event(name).id(e.seq.to_string()).data(v.to_string())
}

async fn events(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<Since>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let slot = st.slot(&id)?;
    let (backlog, rx) = {
        let inner = slot.inner.lock().unwrap_or_else(|p| p.into_inner());
        let rx = slot.tx.subscribe();
        let backlog: Vec<Event> = inner.session.transcript()[..inner.published]
            .iter()
            .filter(|e| q.since.is_none_or(|s| e.seq > s))
            .cloned()
            .collect();
        (backlog, rx)
    };
    let closed = backlog.iter().any(|e| matches!(e.kind, EventKind::Closed));
    let last = backlog.last().map(|e| e.seq).or(q.since);
    let live = stream::unfold((rx, last, closed), |(mut rx, last, done)| async move {
        if done {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok(e) if last.is_some_and(|l| e.seq <= l) => continue,
                Ok(e) => {
                    let done = matches!(e.kind, EventKind::Closed);
                    return Some((e.clone(), (rx, Some(e.seq), done)));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let all = stream::iter(backlog).chain(live).map(|e| Ok(sse_event(&e)));
    Ok(Sse::new(all).keep_alive(KeepAlive::default()))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("csv") => "text/csv",
        Some("json") => "application/json",
        Some("jsonl") => "application/x-ndjson",
        Some("xml") => "application/xml",
        Some("txt") | Some("vtk") => "text/plain",
        _ => "application/octet-stream",
    }
}

async fn artifact(
    State(st): State<Arc<AppState>>,
    UrlPath((id, path)): UrlPath<(String, String)>,
) -> Result<Response, ApiError> {
    let slot = st.slot(&id)?;
    let rel = Path::new(&path);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError(StatusCode::BAD_REQUEST, "artifact paths are relative to the session".into()));
    }
    let dir = blocking(move || slot.with(|s| s.dir().to_path_buf())).await?;
    let full = dir.join(rel);
    let bytes = std::fs::read(&full).map_err(|_| ApiError(StatusCode::NOT_FOUND, format!("no artifact '{path}'")))?;
    Ok(([(header::CONTENT_TYPE, content_type(&full))], Body::from(bytes)).into_response())
}

/// Serve on an already bound listener until interrupted.
pub fn serve_listener(listener: std::net::TcpListener, state: Arc<AppState>) -> anyhow::Result<()> {
    listener.set_nonblocking(true)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

pub fn serve_blocking(addr: &str, root: PathBuf, factory: PlannerFactory, config: SessionConfig) -> anyhow::Result<()> {
    let listener = std::net::TcpListener::bind(addr)?;
    eprintln!("session API on http://{}/api", listener.local_addr()?);
    serve_listener(listener, AppState::new(root, factory, config))
}
