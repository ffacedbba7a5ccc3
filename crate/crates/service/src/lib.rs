//! HTTP and websocket front end for steerable simulation sessions.
//!
//! Routes:
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | session document | `{"id": ...}` |
//! | GET | `/sessions/{id}/state` | | state snapshot |
//! | POST | `/sessions/{id}/control` | control message | ack |
//! | POST | `/sessions/{id}/finish` | | score |
//! | GET | `/sessions/{id}/log` | | event log, one JSON object per line |
//! | GET | `/sessions/{id}/stream` | | websocket |
//!
//! The stream first replays every tick so far, then forwards live ticks,
//! probes and the final score. Text frames from the client are control
//! messages, one per line; each is answered with an ack or an error.

mod actor;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use learnsim_core::session::{ControlMessage, ServerMessage, Session, SessionConfig, SessionError};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use uuid::Uuid;

pub use actor::{SessionHandle, SessionState, Subscription};

/// Simulated minutes per wall-clock second unless configured otherwise.
pub const DEFAULT_TICK_RATE: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Where event logs are written; `None` keeps them in memory only.
    pub session_dir: Option<PathBuf>,
    /// Simulated minutes per wall-clock second.
    pub tick_rate: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session_dir: None,
            tick_rate: DEFAULT_TICK_RATE,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<RwLock<HashMap<Uuid, SessionHandle>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config: Arc::new(config),
            sessions: Arc::default(),
        }
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        let id = Uuid::parse_str(id).map_err(|_| ApiError::UnknownSession)?;
        let sessions = self.sessions.read().expect("session registry poisoned");
        sessions.get(&id).cloned().ok_or(ApiError::UnknownSession)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(session_state))
        .route("/sessions/{id}/control", post(control))
        .route("/sessions/{id}/finish", post(finish))
        .route("/sessions/{id}/log", get(event_log))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

/// Serves on `listener` until the process stops.
pub async fn serve(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    if !(config.tick_rate.is_finite() && config.tick_rate > 0.0) {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("tick rate must be positive (got {})", config.tick_rate),
        ));
    }
    if let Some(dir) = &config.session_dir {
        tokio::fs::create_dir_all(dir).await?;
    }
    axum::serve(listener, router(AppState::new(config))).await
}

#[derive(Debug)]
enum ApiError {
    UnknownSession,
    Unprocessable(Vec<String>),
    Conflict(String),
    Internal(String),
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Invalid(errors) => ApiError::Unprocessable(errors),
            SessionError::InvalidControl(_) => ApiError::Unprocessable(vec![e.to_string()]),
            SessionError::Finished | SessionError::NotFinished => ApiError::Conflict(e.to_string()),
            SessionError::CorruptLog(_) => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<actor::Gone> for ApiError {
    fn from(_: actor::Gone) -> Self {
        ApiError::Internal("session task stopped".into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, errors) = match self {
            ApiError::UnknownSession => (StatusCode::NOT_FOUND, vec!["unknown session".to_string()]),
            ApiError::Unprocessable(errors) => (StatusCode::UNPROCESSABLE_ENTITY, errors),
            ApiError::Conflict(message) => (StatusCode::CONFLICT, vec![message]),
            ApiError::Internal(message) => (StatusCode::INTERNAL_SERVER_ERROR, vec![message]),
        };
        (status, Json(json!({ "errors": errors }))).into_response()
    }
}

fn parse_control(text: &str) -> Result<ControlMessage, String> {
    serde_json::from_str(text).map_err(|e| format!("malformed control message: {e}"))
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::Unprocessable(vec!["body is not UTF-8".into()]))?;
    let config =
        SessionConfig::from_json_text(text).map_err(|e| ApiError::Unprocessable(vec![e.to_string()]))?;
    let session = Session::new(config)?;
    let id = Uuid::new_v4();
    let log_path = app
        .config
        .session_dir
        .as_ref()
        .map(|dir| dir.join(format!("{id}.jsonl")));
    let handle = actor::spawn(id, session, app.config.tick_rate, log_path);
    app.sessions
        .write()
        .expect("session registry poisoned")
        .insert(id, handle);
    tracing::info!(%id, "session created");
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

async fn session_state(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionState>, ApiError> {
    Ok(Json(app.session(&id)?.state().await?))
}

async fn control(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let handle = app.session(&id)?;
    let text = String::from_utf8_lossy(&body);
    let control = parse_control(&text).map_err(|e| ApiError::Unprocessable(vec![e]))?;
    let ack = handle.control(control).await??;
    Ok(Json(ServerMessage::Ack(ack)).into_response())
}

async fn finish(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let score = app.session(&id)?.finish().await??;
    Ok(Json(ServerMessage::Score(score)).into_response())
}

async fn event_log(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let log = app.session(&id)?.log().await?;
    let mut text = String::new();
    for entry in &log {
        text.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
        text.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let handle = app.session(&id)?;
    Ok(ws.on_upgrade(move |socket| stream_session(socket, handle)))
}

fn frame(message: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(message).expect("server messages serialize").into())
}

async fn stream_session(socket: WebSocket, handle: SessionHandle) {
    let Ok(Subscription { history, mut live }) = handle.subscribe().await else {
        return;
    };
    let (mut sink, mut source) = socket.split();
    for tick in history {
        if sink.send(frame(&ServerMessage::Tick(tick))).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            message = live.recv() => {
                let message = match message {
                    Ok(m) => m,
                    Err(RecvError::Lagged(n)) => {
                        // Ticks must arrive without gaps; a lagging client
                        // has to reconnect and replay.
                        let error = ServerMessage::Error { message: format!("client fell {n} messages behind") };
                        let _ = sink.send(frame(&error)).await;
                        break;
                    }
                    Err(RecvError::Closed) => break,
                };
                if sink.send(frame(&message)).await.is_err() {
                    break;
                }
            }
            incoming = source.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => continue,
                };
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    let reply = match parse_control(line) {
                        Ok(control) => match handle.control(control).await {
                            Ok(Ok(ack)) => ServerMessage::Ack(ack),
                            Ok(Err(e)) => ServerMessage::Error { message: e.to_string() },
                            Err(_) => return,
                        },
                        Err(message) => ServerMessage::Error { message },
                    };
                    if sink.send(frame(&reply)).await.is_err() {
                        return;
                    }
                }
            }
        }
    }
}
