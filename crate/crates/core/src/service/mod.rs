//! HTTP API over the engine for the consult console.
//!
//! Sessions move through `consulting → awaiting_answer → … → differentiating
//! → recommending → done`, or end in `aborted`. Engine calls run on the
//! blocking pool while the session's own lock is held, so two requests for
//! the same session never interleave. With a data directory every state
//! change is appended to that session's log before the response is sent.

mod store;

pub use store::{EventKind, SessionStore, StoredEvent};

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::domain::{ChiefComplaint, ConsultationTurn, MedicalRecord};
use crate::dsrs::Recommendation;
use crate::engine::Engine;
use crate::maccm::{ConsultationSession, Progress};
use crate::syndrome::SyndromePrediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Consulting,
    AwaitingAnswer,
    Differentiating,
    Recommending,
    Done,
    Aborted,
}

impl Phase {
    /// Phases that only exist while a request is being processed.
    pub fn is_transient(self) -> bool {
        matches!(self, Phase::Consulting | Phase::Differentiating | Phase::Recommending)
    }
}

/// Everything the service keeps about one session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub phase: Phase,
    pub session: ConsultationSession,
    #[serde(default)]
    pub syndrome: Option<SyndromePrediction>,
    #[serde(default)]
    pub recommendation: Option<Recommendation>,
    #[serde(default)]
    pub error: Option<String>,
    /// Key of the last applied answer request, for safe client retries.
    #[serde(default)]
    pub last_idempotency_key: Option<String>,
    pub seq: u64,
}

/// Public view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub phase: Phase,
    pub round: usize,
    pub complaint: String,
    pub team: Vec<String>,
    pub questions: Vec<String>,
    pub turns: Vec<ConsultationTurn>,
    pub record: Option<MedicalRecord>,
    pub syndrome: Option<SyndromePrediction>,
    pub recommendation: Option<Recommendation>,
    pub error: Option<String>,
}

impl SessionRecord {
    pub fn view(&self) -> SessionView {
        let s = &self.session;
        SessionView {
            id: self.id.clone(),
            phase: self.phase,
            round: if self.phase == Phase::AwaitingAnswer { s.current_round() } else { s.rounds_done },
            complaint: s.complaint.text.clone(),
            team: s.team.members().map(|m| m.id.clone()).collect(),
            questions: if self.phase == Phase::AwaitingAnswer {
                s.pending.iter().map(|q| q.text.clone()).collect()
            } else {
                Vec::new()
            },
            turns: s.state.turns().to_vec(),
            record: s.final_record.clone(),
            syndrome: self.syndrome.clone(),
            recommendation: self.recommendation.clone(),
            error: self.error.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct CreateRequest {
    complaint: String,
}

#[derive(Debug, Deserialize)]
struct AnswerRequest {
    answers: Vec<String>,
    #[serde(default)]
    idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    fn storage(e: std::io::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.body }))).into_response()
    }
}

type Shared = Arc<Mutex<SessionRecord>>;

pub struct AppState {
    engine: Arc<Engine>,
    sessions: std::sync::Mutex<HashMap<String, Shared>>,
    store: Option<SessionStore>,
    token: Option<String>,
}

impl AppState {
    /// Loads every stored session. Sessions caught in a transient phase were
    /// interrupted mid-request and are marked aborted.
    pub fn new(engine: Engine, store: Option<SessionStore>, token: Option<String>) -> std::io::Result<Self> {
        let mut sessions = HashMap::new();
        if let Some(store) = &store {
            for event in store.recover()? {
                let mut rec = event.snapshot;
                if rec.phase.is_transient() {
                    rec.phase = Phase::Aborted;
                    rec.error = Some("interrupted by a service restart".into());
                    rec.seq += 1;
                    store.append(&StoredEvent { seq: rec.seq, kind: EventKind::Aborted, snapshot: rec.clone() })?;
                }
                sessions.insert(rec.id.clone(), Arc::new(Mutex::new(rec)));
            }
        }
        Ok(Self { engine: Arc::new(engine), sessions: std::sync::Mutex::new(sessions), store, token })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map lock").len()
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}")))
    }

    fn persist(&self, kind: EventKind, rec: &mut SessionRecord) -> Result<(), ApiError> {
        rec.seq += 1;
        match &self.store {
            Some(store) => {
                store.append(&StoredEvent { seq: rec.seq, kind, snapshot: rec.clone() }).map_err(ApiError::storage)
            }
            None => Ok(()),
        }
    }

    fn abort(&self, rec: &mut SessionRecord, message: String) -> ApiError {
        rec.phase = Phase::Aborted;
        rec.error = Some(message.clone());
        if let Err(e) = self.persist(EventKind::Aborted, rec) {
            return e;
        }
        ApiError::new(StatusCode::BAD_GATEWAY, "engine_failure", message)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/answers", post(submit_answers))
        .route("/v1/sessions/{id}/transcript", get(get_transcript))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/v1/healthz", get(healthz)).merge(api).with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|v| v == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "sessions": state.session_count() }))
}

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("bad request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateRequest = parse(&body)?;
    let complaint = ChiefComplaint::new(req.complaint, Utc::now()).map_err(|e| ApiError::validation(e.to_string()))?;
    let engine = state.engine.clone();
    let started = blocking(move || engine.consultant().start(complaint)).await?;
    let session = started.map_err(|aborted| {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "engine_unavailable", aborted.error.to_string())
    })?;
    let mut rec = SessionRecord {
        id: uuid::Uuid::new_v4().simple().to_string(),
        phase: Phase::AwaitingAnswer,
        session,
        syndrome: None,
        recommendation: None,
        error: None,
        last_idempotency_key: None,
        seq: 0,
    };
    state.persist(EventKind::Created, &mut rec)?;
    let view = rec.view();
    state.sessions.lock().expect("session map lock").insert(rec.id.clone(), Arc::new(Mutex::new(rec)));
    let location = format!("/v1/sessions/{}", view.id);
    Ok((StatusCode::CREATED, [(header::LOCATION, location)], Json(view)).into_response())
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let shared = state.get(&id)?;
    let rec = shared.lock().await;
    Ok(Json(rec.view()))
}

/// The session's transcript, one JSON event per line.
async fn get_transcript(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.get(&id)?;
    let rec = shared.lock().await;
    let body = rec.session.transcript.to_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn submit_answers(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let shared = state.get(&id)?;
    let req: AnswerRequest = parse(&body)?;
    let mut rec = shared.lock().await;

    if req.idempotency_key.is_some() && req.idempotency_key == rec.last_idempotency_key {
        return Ok(Json(rec.view()));
    }
    if rec.phase != Phase::AwaitingAnswer {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "phase_violation",
            format!("session is {:?}, not awaiting an answer", rec.phase),
        ));
    }
    let expected = rec.session.pending.len();
    if req.answers.len() != expected {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "answer_count_mismatch",
            format!("expected {expected} answers, got {}", req.answers.len()),
        ));
    }
    if req.answers.iter().any(|a| a.trim().is_empty()) {
        return Err(ApiError::validation("answers must not be blank"));
    }

    let engine = state.engine.clone();
    let session = rec.session.clone();
    let answers = req.answers;
    let submitted = blocking(move || engine.consultant().submit_answers(&session, &answers)).await?;
    let (next, progress) = match submitted {
        Ok(v) => v,
        Err(e) => return Err(state.abort(&mut rec, e.to_string())),
    };
    rec.session = next;
    rec.last_idempotency_key = req.idempotency_key;
    let record = match progress {
        Progress::Questions(_) => {
            state.persist(EventKind::Answered, &mut rec)?;
            return Ok(Json(rec.view()));
        }
        Progress::Finished(record) => record,
    };

    rec.phase = Phase::Differentiating;
    state.persist(EventKind::Answered, &mut rec)?;
    let engine = state.engine.clone();
    let final_record = record.clone();
    let syndrome = match blocking(move || engine.differentiate(&final_record)).await? {
        Ok(s) => s,
        Err(e) => return Err(state.abort(&mut rec, e.to_string())),
    };
    rec.syndrome = Some(syndrome.clone());
    rec.phase = Phase::Recommending;
    let engine = state.engine.clone();
    let recommendation = match blocking(move || engine.recommend(&record, &syndrome)).await? {
        Ok(r) => r,
        Err(e) => return Err(state.abort(&mut rec, e.to_string())),
    };
    rec.recommendation = Some(recommendation);
    rec.phase = Phase::Done;
    state.persist(EventKind::Finished, &mut rec)?;
    Ok(Json(rec.view()))
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
