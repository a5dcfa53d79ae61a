//! HTTP and WebSocket API over the session engine.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

use flipper_core::exec::Trace;
use flipper_core::session::{Engine, EngineError};
use flipper_core::store::RuleFilter;
use flipper_core::world::{GridWorld, Step};

/// Header naming the acting user for rule deletion.
pub const USER_HEADER: &str = "x-user-id";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Mutex<Engine>>,
    channels: Arc<Mutex<HashMap<String, broadcast::Sender<String>>>>,
}

impl AppState {
    pub fn new(engine: Engine) -> AppState {
        AppState {
            engine: Arc::new(Mutex::new(engine)),
            channels: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn engine(&self) -> std::sync::MutexGuard<'_, Engine> {
        self.engine.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn channel(&self, session: &str) -> broadcast::Sender<String> {
        let mut ch = self.channels.lock().unwrap_or_else(|e| e.into_inner());
        ch.entry(session.to_string()).or_insert_with(|| broadcast::channel(1024).0).clone()
    }
}

pub struct ApiError(StatusCode, Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> ApiError {
        let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut body = json!({ "error": e.to_string() });
        match &e {
            EngineError::DefinitionNotParsable(p) => {
                body["kind"] = json!("DefinitionNotParsable");
                body["position"] = json!(p);
            }
            EngineError::Unrealizable(w) => {
                body["kind"] = json!("Unrealizable");
                body["warnings"] = json!(w);
            }
            _ => {}
        }
        ApiError(status, body)
    }
}

fn bad_request(msg: &str) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, json!({ "error": msg }))
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/session", post(open_session))
        .route("/api/session/{id}", get(get_session))
        .route("/api/utterance", post(utterance))
        .route("/api/choose", post(choose))
        .route("/api/define", post(define))
        .route("/api/rules", get(list_rules))
        .route("/api/rules/{id}", delete(delete_rule))
        .route("/api/worlds", get(list_worlds))
        .route("/api/worlds/{id}", get(get_world))
        .route("/api/ws/{session}", get(ws))
        .with_state(state)
}

#[derive(Deserialize)]
struct OpenReq {
    world_id: String,
    user: String,
}

async fn open_session(State(st): State<AppState>, Json(r): Json<OpenReq>) -> ApiResult<Value> {
    let (id, world) = st.engine().open_session(&r.user, &r.world_id)?;
    Ok(Json(json!({ "session_id": id, "world": world })))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    let e = st.engine();
    let s = e.session(&id)?;
    Ok(Json(json!({
        "session_id": s.id,
        "user": s.user,
        "world": s.world,
        "world_id": s.world_id,
        "pending": s.pending(),
        "history": s.history,
    })))
}

#[derive(Deserialize)]
struct UtteranceReq {
    session: String,
    text: String,
}

async fn utterance(State(st): State<AppState>, Json(r): Json<UtteranceReq>) -> ApiResult<Value> {
    let res = st.engine().utterance(&r.session, &r.text)?;
    Ok(Json(serde_json::to_value(res).expect("serializes")))
}

#[derive(Deserialize)]
struct ChooseReq {
    session: String,
    candidate_id: usize,
    #[serde(default)]
    idempotency_key: Option<String>,
}

async fn choose(State(st): State<AppState>, headers: HeaderMap, Json(r): Json<ChooseReq>) -> ApiResult<Value> {
    let key = r
        .idempotency_key
        .clone()
        .or_else(|| headers.get(IDEMPOTENCY_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string));
    let (res, before) = {
        let mut e = st.engine();
        let before = e.session(&r.session)?.world.clone();
        (e.choose(&r.session, r.candidate_id, key.as_deref())?, before)
    };
    let tx = st.channel(&r.session);
    for f in frames(&before, &res.trace, "commit") {
        let _ = tx.send(f);
    }
    Ok(Json(json!({ "world": res.world, "world_id": res.world_id, "trace": res.trace })))
}

#[derive(Deserialize)]
struct DefineReq {
    session: String,
    utterance: String,
    definition: String,
}

async fn define(State(st): State<AppState>, Json(r): Json<DefineReq>) -> ApiResult<Value> {
    let res = st.engine().define(&r.session, &r.utterance, &r.definition)?;
    Ok(Json(serde_json::to_value(res).expect("serializes")))
}

#[derive(Deserialize)]
struct RulesQuery {
    author: Option<String>,
    #[serde(default)]
    core: bool,
}

async fn list_rules(State(st): State<AppState>, Query(q): Query<RulesQuery>) -> ApiResult<Value> {
    let rules = st.engine().list_rules(&RuleFilter {
        author: q.author,
        include_core: q.core,
    });
    let rules: Vec<Value> = rules
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("serializes");
            v["text"] = json!(r.to_string());
            v
        })
        .collect();
    Ok(Json(json!({ "rules": rules })))
}

async fn delete_rule(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<StatusCode, ApiError> {
    let user = headers
        .get(USER_HEADER)
        .and_then(|v| v.to_str().ok())
        .ok_or_else(|| bad_request("missing x-user-id header"))?;
    st.engine().delete_rule(&id, user)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_worlds(State(st): State<AppState>) -> ApiResult<Value> {
    let ids: Vec<String> = st.engine().store().world_ids().map(str::to_string).collect();
    Ok(Json(json!({ "worlds": ids })))
}

async fn get_world(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<GridWorld> {
    let e = st.engine();
    let w = e.store().world(&id).map_err(EngineError::from)?;
    Ok(Json(w.clone()))
}

#[derive(Serialize)]
struct Frame<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    source: &'a str,
    index: usize,
    step: &'a Step,
    world_diff: Value,
}

/// Animation frames for `trace` replayed from `start`, ending with a `done` frame.
pub fn frames(start: &GridWorld, trace: &Trace, source: &str) -> Vec<String> {
    let mut w = start.clone();
    let mut out = Vec::with_capacity(trace.steps.len() + 1);
    for (index, step) in trace.steps.iter().enumerate() {
        if w.apply(step).is_err() {
            break;
        }
        let mut items = serde_json::Map::new();
        if let Step::Pick { item } | Step::Drop { item } = step {
            items.insert(item.clone(), json!(w.items.get(item).and_then(|i| i.position)));
        }
        let world_diff = json!({
            "robot": w.robot.position,
            "holding": w.robot.holding,
            "items": items,
        });
        let f = Frame {
            kind: "step",
            source,
            index,
            step,
            world_diff,
        };
        out.push(serde_json::to_string(&f).expect("serializes"));
    }
    out.push(json!({ "type": "done", "source": source, "warnings": trace.warnings }).to_string());
    out
}

#[derive(Deserialize)]
struct ClientMsg {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    candidate: Option<usize>,
}

async fn ws(State(st): State<AppState>, Path(session): Path<String>, up: WebSocketUpgrade) -> Result<Response, ApiError> {
    st.engine().session(&session)?;
    Ok(up.on_upgrade(move |sock| ws_loop(st, session, sock)))
}

/// Forwards commit frames for the session and answers `{"type":"animate","candidate":i}`
/// with that pending candidate's frames.
async fn ws_loop(st: AppState, session: String, mut sock: WebSocket) {
    let mut rx = st.channel(&session).subscribe();
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(f) => {
                    if sock.send(Message::Text(f.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(_) => return,
            },
            incoming = sock.recv() => {
                let Some(Ok(msg)) = incoming else { return };
                let Message::Text(text) = msg else { continue };
                let reply: Vec<String> = match serde_json::from_str::<ClientMsg>(&text) {
                    Ok(m) if m.kind == "animate" => {
                        let e = st.engine();
                        match e.session(&session) {
                            Ok(s) => match (m.candidate, s.pending()) {
                                (Some(i), Some(p)) if i < p.len() => frames(&s.world, &p[i].trace, "preview"),
                                _ => vec![json!({"type": "error", "error": "no such pending candidate"}).to_string()],
                            },
                            Err(err) => vec![json!({"type": "error", "error": err.to_string()}).to_string()],
                        }
                    }
                    _ => vec![json!({"type": "error", "error": "unknown message"}).to_string()],
                };
                for f in reply {
                    if sock.send(Message::Text(f.into())).await.is_err() {
                        return;
                    }
                }
            }
        }
    }
}
