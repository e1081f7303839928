//! HTTP and WebSocket surface.
//!
//! | route | method |
//! |---|---|
//! | `/nodes` | GET |
//! | `/pipelines` | GET |
//! | `/pipelines/{id}` | GET, PUT |
//! | `/sessions` | GET, POST |
//! | `/sessions/{id}` | GET |
//! | `/sessions/{id}/start`, `/stop`, `/params` | POST |
//! | `/sessions/{id}/frames` | WebSocket |

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{CloseFrame, Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use noetic_flow::handle::DEFAULT_SUBSCRIBER_CAPACITY;
use noetic_flow::{catalog, parse_pipeline, validate_graph, FlowError, PlotFrame};

use crate::session::{CreateRequest, Registry, SessionError};
use crate::store::{Store, StoreError};

pub const CLOSE_NOT_FOUND: u16 = 4404;
pub const CLOSE_CONFLICT: u16 = 4409;
const WS_POLL: Duration = Duration::from_millis(5);
pub const MAX_SUBSCRIBER_CAPACITY: usize = 65_536;

#[derive(Clone)]
pub struct AppState {
    pub store: Store,
    pub sessions: Arc<Registry>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self { store, sessions: Arc::new(Registry::new()) }
    }
}

/// An error response: status plus a JSON body with `error` and, where
/// known, the offending `node` and any `cycle`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": message.into() }) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<FlowError> for ApiError {
    fn from(e: FlowError) -> Self {
        let mut body = json!({ "error": e.to_string() });
        if let Some(node) = e.node() {
            body["node"] = json!(node);
        }
        if let FlowError::Cycle { cycle, .. } = &e {
            body["cycle"] = json!(cycle);
        }
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, body }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::BadId(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Corrupted { .. } | StoreError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, e.to_string()),
            SessionError::Conflict { .. } => Self::new(StatusCode::CONFLICT, e.to_string()),
            SessionError::Invalid(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            SessionError::Flow(f) => f.into(),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid request body: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/nodes", get(list_nodes))
        .route("/pipelines", get(list_pipelines))
        .route("/pipelines/{id}", get(get_pipeline).put(put_pipeline))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/start", post(start_session))
        .route("/sessions/{id}/stop", post(stop_session))
        .route("/sessions/{id}/params", post(update_param))
        .route("/sessions/{id}/frames", get(frames_ws))
        .with_state(state)
}

async fn list_nodes() -> Json<Value> {
    Json(json!(catalog()))
}

async fn list_pipelines(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(s.store.list()?)))
}

async fn get_pipeline(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (doc, hash) = blocking(move || Ok(s.store.get(&id)?)).await?;
    let mut resp = Json(doc).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("\"{hash}\"")) {
        resp.headers_mut().insert(header::ETAG, v);
    }
    Ok(resp)
}

#[derive(Serialize)]
struct PutResponse {
    id: String,
    hash: String,
}

async fn put_pipeline(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<PutResponse>> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "body is not UTF-8"))?;
    let source = format!("pipelines/{id}");
    let doc = parse_pipeline(text, &source)?;
    validate_graph(&doc, &source)?;
    let hash = blocking({
        let id = id.clone();
        move || Ok(s.store.put(&id, &doc)?)
    })
    .await?;
    Ok(Json(PutResponse { id, hash }))
}

async fn list_sessions(State(s): State<AppState>) -> Json<Value> {
    Json(json!(s.sessions.list()))
}

async fn create_session(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateRequest = parse_json(&body)?;
    let desc = blocking(move || {
        let (doc, hash) = s.store.get(&req.pipeline_id)?;
        Ok(s.sessions.create(&req.pipeline_id, &hash, &doc, &req)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(desc)).into_response())
}

async fn get_session(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let v = blocking(move || Ok(s.sessions.get(&id)?)).await?;
    Ok(Json(json!(v)))
}

async fn start_session(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let d = blocking(move || Ok(s.sessions.start(&id)?)).await?;
    Ok(Json(json!(d)))
}

async fn stop_session(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let v = blocking(move || Ok(s.sessions.stop(&id)?)).await?;
    Ok(Json(json!(v)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRequest {
    node: String,
    param: String,
    value: Value,
}

async fn update_param(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: ParamRequest = parse_json(&body)?;
    let ack = blocking(move || Ok(s.sessions.update_param(&id, &req.node, &req.param, req.value)?)).await?;
    Ok(Json(json!(ack)))
}

#[derive(Deserialize)]
struct FrameQuery {
    /// Comma-separated plot-sink ids; all sinks when absent.
    nodes: Option<String>,
    capacity: Option<usize>,
}

/// One WebSocket message: a plot frame plus the subscriber-local sequence
/// number, which has gaps where frames were dropped.
#[derive(Serialize)]
struct WsFrame<'a> {
    sub_seq: u64,
    #[serde(flatten)]
    frame: &'a PlotFrame,
}

async fn frames_ws(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FrameQuery>,
    ws: WebSocketUpgrade,
) -> Response {
    let nodes: Option<BTreeSet<String>> =
        q.nodes.map(|n| n.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect());
    let capacity = q.capacity.unwrap_or(DEFAULT_SUBSCRIBER_CAPACITY).clamp(1, MAX_SUBSCRIBER_CAPACITY);
    // subscribe before the handshake completes so no frame published after
    // the client sees the upgrade is missed
    let sub = s.sessions.bus(&id).map(|bus| bus.subscribe(nodes, capacity));
    ws.on_upgrade(move |socket| async move {
        match sub {
            Ok(sub) => stream_frames(socket, sub).await,
            Err(e) => {
                let code = if matches!(e, SessionError::NotFound(_)) { CLOSE_NOT_FOUND } else { CLOSE_CONFLICT };
                close(socket, code, &e.to_string()).await;
            }
        }
    })
}

async fn close(mut socket: WebSocket, code: u16, reason: &str) {
    let reason: String = reason.chars().take(120).collect();
    let _ = socket.send(Message::Close(Some(CloseFrame { code, reason: Utf8Bytes::from(reason) }))).await;
}

async fn stream_frames(mut socket: WebSocket, sub: noetic_flow::Subscription) {
    loop {
        if let Some((sub_seq, frame)) = sub.try_recv() {
            let text = serde_json::to_string(&WsFrame { sub_seq, frame: &frame }).expect("frame serializes");
            if socket.send(Message::Text(text.into())).await.is_err() {
                return;
            }
            continue;
        }
        if sub.is_closed() {
            close(socket, 1000, "session stopped").await;
            return;
        }
        tokio::select! {
            msg = socket.recv() => match msg {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
            _ = tokio::time::sleep(WS_POLL) => {}
        }
    }
}

/// Serves until ctrl-c, then stops every running session.
pub async fn serve(state: AppState, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let sessions = state.sessions.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    tokio::task::spawn_blocking(move || sessions.stop_all()).await.ok();
    Ok(())
}
