//! HTTP surface. Bodies are JSON except `POST /events` (newline-delimited
//! wire documents) and `GET /chat/stream` (newline-delimited stream records).

use std::collections::VecDeque;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use rapp_core::clock::{Clock, SystemClock};
use rapp_core::config::{ConfigError, Decision};
use rapp_core::experiment::{AgentFactory, CellSetting, RunMode};
use rapp_core::reasoning::ReasoningError;

use crate::runs::{RunLookup, RunRegistry};
use crate::scenario::{self, ScenarioError};
use crate::settings::ServiceSettings;
use crate::state::{LiveService, ServiceError};
use crate::stream::{StreamHub, StreamRecord};

/// Operator name used when a request does not give one.
pub const DEFAULT_OPERATOR: &str = "operator";

#[derive(Clone)]
pub struct AppState {
    pub live: Arc<LiveService>,
    pub runs: Arc<RunRegistry>,
    pub settings: Arc<ServiceSettings>,
    pub agent: AgentFactory,
}

impl AppState {
    /// Builds the stores for the configured scenario.
    pub fn new(settings: ServiceSettings, agent: AgentFactory, clock: Arc<dyn Clock>) -> Result<Self, ScenarioError> {
        let spec = scenario::resolve(&settings.scenario, &settings.scenario_dir)?;
        let stream = Arc::new(StreamHub::default());
        let policy = settings.batch_policy.unwrap_or(spec.batch_policy);
        let live = LiveService::new(&spec, policy, settings.orchestrator, agent.clone(), clock, stream.clone());
        Ok(Self {
            live: Arc::new(live),
            runs: Arc::new(RunRegistry::new(stream)),
            settings: Arc::new(settings),
            agent,
        })
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::UnknownCycle(_) | ServiceError::Config(ConfigError::UnknownProposal(_)) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::EmptyBody => StatusCode::BAD_REQUEST,
            ServiceError::Reasoning(ReasoningError::NoPendingProposal { .. }) => StatusCode::NOT_FOUND,
            _ => StatusCode::CONFLICT,
        };
        ApiError(status, e.to_string())
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        let status = match e {
            ScenarioError::NotFound { .. } => StatusCode::NOT_FOUND,
            ScenarioError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    }
}

/// Runs blocking service work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/events", post(post_events))
        .route("/batches", get(get_batches))
        .route("/chat", post(post_chat))
        .route("/chat/stream", get(chat_stream))
        .route("/proposals", get(get_proposals))
        .route("/proposals/{id}/approve", post(approve))
        .route("/proposals/{id}/reject", post(reject))
        .route("/audit", get(get_audit))
        .route("/config", get(get_config))
        .route("/config/history", get(get_config_history))
        .route("/runs", post(post_run))
        .route("/runs/{id}/report", get(get_run_report))
        .with_state(state)
}

async fn healthz(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ready",
        "config_version": s.live.config().version(),
        "audit_records": s.live.audit().len(),
        "queue_depth": s.live.pipeline().depth(),
    }))
}

async fn post_events(State(s): State<AppState>, body: String) -> Result<Response, ApiError> {
    let live = s.live.clone();
    let summary = blocking(move || live.ingest_ndjson(&body)).await??;
    Ok(Json(summary).into_response())
}

async fn get_batches(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "batches": s.live.batches(),
        "queued": s.live.queued_batches(),
        "parked_cycles": s.live.parked_cycles(),
    }))
}

#[derive(Debug, Deserialize)]
struct ChatRequest {
    text: String,
    #[serde(default)]
    cycle_id: Option<String>,
    #[serde(default)]
    operator: Option<String>,
}

async fn post_chat(State(s): State<AppState>, Json(req): Json<ChatRequest>) -> Result<Response, ApiError> {
    let live = s.live.clone();
    let cycle = blocking(move || {
        let operator = req.operator.as_deref().unwrap_or(DEFAULT_OPERATOR);
        live.chat(&req.text, req.cycle_id.as_deref(), operator)
    })
    .await??;
    Ok(Json(json!({
        "cycle_id": cycle.cycle_id,
        "mode_trace": cycle.mode_trace(),
        "parked_for_human": cycle.parked_for_human,
        "stopped": cycle.is_stopped(),
        "reply": cycle.summary(),
    }))
    .into_response())
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    /// Resume after this sequence number.
    #[serde(default)]
    since: u64,
    /// Keep the connection open for new records.
    #[serde(default = "yes")]
    follow: bool,
}

fn yes() -> bool {
    true
}

fn ndjson_line(r: &StreamRecord) -> Result<String, Infallible> {
    Ok(serde_json::to_string(r).expect("stream record serializes") + "\n")
}

struct Tail {
    hub: Arc<StreamHub>,
    rx: tokio::sync::broadcast::Receiver<StreamRecord>,
    last: u64,
    pending: VecDeque<StreamRecord>,
}

/// Backlog first, then live records. The subscription is taken before the
/// backlog is read and records are deduplicated by `seq`, so nothing falls
/// in between. A subscriber that lags behind catches up from the history.
async fn chat_stream(State(s): State<AppState>, Query(q): Query<StreamQuery>) -> Response {
    let hub = s.live.stream().clone();
    let rx = hub.subscribe();
    let backlog: VecDeque<StreamRecord> = hub.since(q.since).into();
    let tail = Tail { last: q.since, hub, rx, pending: backlog };
    let follow = q.follow;
    let stream = futures::stream::unfold(tail, move |mut t| async move {
        loop {
            if let Some(r) = t.pending.pop_front() {
                if r.seq <= t.last {
                    continue;
                }
                t.last = r.seq;
                let line = ndjson_line(&r);
                return Some((line, t));
            }
            if !follow {
                return None;
            }
            match t.rx.recv().await {
                Ok(r) => t.pending.push_back(r),
                Err(RecvError::Lagged(_)) => t.pending.extend(t.hub.since(t.last)),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response()
}

async fn get_proposals(State(s): State<AppState>) -> Response {
    Json(s.live.config().proposals()).into_response()
}

#[derive(Debug, Default, Deserialize)]
struct OperatorQuery {
    #[serde(default)]
    operator: Option<String>,
}

async fn decide(s: AppState, id: String, decision: Decision, q: OperatorQuery) -> Result<Response, ApiError> {
    let live = s.live.clone();
    let decided = blocking(move || {
        live.decide(&id, decision, q.operator.as_deref().unwrap_or(DEFAULT_OPERATOR))
    })
    .await??;
    Ok(Json(decided).into_response())
}

async fn approve(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<OperatorQuery>,
) -> Result<Response, ApiError> {
    decide(s, id, Decision::Approve, q).await
}

async fn reject(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<OperatorQuery>,
) -> Result<Response, ApiError> {
    decide(s, id, Decision::Reject, q).await
}

#[derive(Debug, Deserialize)]
struct AuditQuery {
    #[serde(default)]
    since: u64,
}

async fn get_audit(State(s): State<AppState>, Query(q): Query<AuditQuery>) -> Response {
    Json(s.live.audit().since(q.since)).into_response()
}

async fn get_config(State(s): State<AppState>) -> Response {
    Json(s.live.config().export_document()).into_response()
}

/// A committed version with its cells as a list, since cell ids are not
/// JSON object keys.
#[derive(Debug, Serialize)]
struct VersionView {
    version: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    proposal_id: Option<String>,
    at_ms: u64,
    cells: Vec<CellSetting>,
}

async fn get_config_history(State(s): State<AppState>) -> Response {
    let views: Vec<VersionView> = s
        .live
        .config()
        .version_history()
        .into_iter()
        .map(|v| VersionView {
            version: v.version,
            proposal_id: v.proposal_id,
            at_ms: v.at_ms,
            cells: v.cells.iter().map(|(cell, a3)| CellSetting { cell: *cell, a3: *a3 }).collect(),
        })
        .collect();
    Json(views).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    #[serde(default)]
    scenario: Option<String>,
    #[serde(default = "with_rapp")]
    mode: RunMode,
    #[serde(default)]
    auto_approve: bool,
}

fn with_rapp() -> RunMode {
    RunMode::WithRapp
}

#[derive(Debug, Serialize)]
struct RunAccepted {
    run_id: String,
    report: String,
}

async fn post_run(State(s): State<AppState>, Json(req): Json<RunRequest>) -> Result<Response, ApiError> {
    let name = req.scenario.unwrap_or_else(|| s.settings.scenario.clone());
    let spec = scenario::resolve(&name, &s.settings.scenario_dir)?;
    let run_id = s.runs.start(spec, req.mode, req.auto_approve, s.agent.clone());
    let report = format!("/runs/{run_id}/report");
    Ok((StatusCode::ACCEPTED, Json(RunAccepted { run_id, report })).into_response())
}

async fn get_run_report(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match s.runs.get(&id) {
        RunLookup::Unknown => Err(ApiError(StatusCode::NOT_FOUND, format!("unknown run {id}"))),
        RunLookup::Running => Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": id, "status": "RUNNING" }))).into_response()),
        RunLookup::Failed(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e)),
        RunLookup::Done(report) => {
            Ok(([(header::CONTENT_TYPE, "application/json")], report.to_json()).into_response())
        }
    }
}

/// Polls the pipeline every poll period until the task is dropped.
pub async fn batcher(live: Arc<LiveService>) {
    let mut tick = tokio::time::interval(Duration::from_millis(live.policy().poll_period_ms()));
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tick.tick().await;
        let l = live.clone();
        if let Err(e) = tokio::task::spawn_blocking(move || l.poll()).await {
            tracing::error!("batch poll failed: {e}");
        }
    }
}

/// Binds, serves until Ctrl-C, then stops any parked cycles.
pub async fn serve(settings: ServiceSettings, agent: AgentFactory) -> anyhow::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], settings.port));
    let state = AppState::new(settings, agent, Arc::new(SystemClock))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot listen on {addr}: {e}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    let batch_task = tokio::spawn(batcher(state.live.clone()));
    let live = state.live.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    batch_task.abort();
    tokio::task::spawn_blocking(move || live.abandon_all("service shutdown")).await?;
    Ok(())
}
