use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use flipper_core::genz::EmbeddingTable;
use flipper_core::session::Engine;
use flipper_core::store::Store;
use flipper_core::world::GridWorld;
use flipper_server::{router, AppState};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn state() -> AppState {
    let mut s = Store::in_memory();
    for n in ["fig1", "sorting"] {
        s.import_world(n, &GridWorld::load(&data(&format!("worlds/{n}.json"))).unwrap()).unwrap();
    }
    AppState::new(Engine::new(s, Some(Arc::new(EmbeddingTable::bundled().clone()))))
}

async fn call(st: &AppState, method: &str, uri: &str, body: Option<Value>, headers: &[(&str, &str)]) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(st.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn open(st: &AppState, user: &str, world: &str) -> String {
    let (s, v) = call(st, "POST", "/api/session", Some(json!({"world_id": world, "user": user})), &[]).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn session_creation_and_unknown_world() {
    let st = state();
    let (s, v) = call(&st, "POST", "/api/session", Some(json!({"world_id": "fig1", "user": "ann"})), &[]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["world"]["robot"]["x"], 3);
    let (s, _) = call(&st, "POST", "/api/session", Some(json!({"world_id": "nope", "user": "ann"})), &[]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&st, "GET", "/api/session/s99", None, &[]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn fig1_loop_over_http() {
    let st = state();
    let sid = open(&st, "ann", "fig1").await;
    let (s, v) = call(&st, "POST", "/api/utterance", Some(json!({"session": sid, "text": "visit red triangle"})), &[]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "unparsable");

    let (s, v) = call(
        &st,
        "POST",
        "/api/define",
        Some(json!({"session": sid, "utterance": "visit red triangle", "definition": "move right"})),
        &[],
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["generalized_from"], "visit world containing item is red and is triangle");
    assert!(!v["induced_rules"].as_array().unwrap().is_empty());

    let (s, v) = call(&st, "POST", "/api/utterance", Some(json!({"session": sid, "text": "visit red triangle"})), &[]).await;
    assert_eq!(s, StatusCode::OK);
    let c = &v["candidates"].as_array().unwrap()[0];
    assert_eq!(c["trace"]["steps"], json!([{"op": "move", "dir": "right"}]));
    assert!(c["prob"].as_f64().unwrap() > 0.0);

    let (_, before) = call(&st, "GET", &format!("/api/session/{sid}"), None, &[]).await;
    assert_eq!(before["world"]["robot"]["x"], 3);

    let (s, v) = call(&st, "POST", "/api/choose", Some(json!({"session": sid, "candidate_id": 0})), &[("idempotency-key", "a")]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["world"]["robot"]["x"], 4);
    let (s, again) = call(&st, "POST", "/api/choose", Some(json!({"session": sid, "candidate_id": 0})), &[("idempotency-key", "a")]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(again, v);
    let (s, _) = call(&st, "POST", "/api/choose", Some(json!({"session": sid, "candidate_id": 0})), &[]).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn empty_text_and_bad_definition() {
    let st = state();
    let sid = open(&st, "ann", "fig1").await;
    let (s, _) = call(&st, "POST", "/api/utterance", Some(json!({"session": sid, "text": ""})), &[]).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&st, "POST", "/api/utterance", Some(json!({"session": "s42", "text": "move up"})), &[]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call(
        &st,
        "POST",
        "/api/define",
        Some(json!({"session": sid, "utterance": "hop", "definition": "mvoe left"})),
        &[],
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["kind"], "DefinitionNotParsable");
    assert_eq!(v["position"]["token"], 0);
    let (s, v) = call(
        &st,
        "POST",
        "/api/define",
        Some(json!({"session": sid, "utterance": "grab", "definition": "move up"})),
        &[],
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["kind"], "Unrealizable");
    assert_eq!(v["warnings"][0], "cannot move up from [3, 0]");
}

#[tokio::test]
async fn ambiguity_yields_ranked_candidates() {
    let st = state();
    let sid = open(&st, "ann", "fig1").await;
    for d in ["repeat 2 times move down", "repeat 2 times move left"] {
        let (s, v) = call(&st, "POST", "/api/define", Some(json!({"session": sid, "utterance": "go 2", "definition": d})), &[]).await;
        assert_eq!(s, StatusCode::OK, "{v}");
    }
    let (_, v) = call(&st, "POST", "/api/utterance", Some(json!({"session": sid, "text": "go 2"})), &[]).await;
    let c = v["candidates"].as_array().unwrap();
    assert_eq!(c.len(), 2);
    assert!(c[0]["score"].as_f64().unwrap() >= c[1]["score"].as_f64().unwrap());
}

#[tokio::test]
async fn rules_listing_and_ownership() {
    let st = state();
    let sid = open(&st, "ann", "fig1").await;
    let (s, v) = call(&st, "POST", "/api/define", Some(json!({"session": sid, "utterance": "go 2", "definition": "repeat 2 times move down"})), &[]).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let id = v["induced_rules"][0]["id"].as_str().unwrap().to_string();

    let (_, v) = call(&st, "GET", "/api/rules", None, &[]).await;
    let rules = v["rules"].as_array().unwrap();
    assert!(rules.iter().any(|r| r["id"] == id.as_str()));
    assert!(rules.iter().all(|r| r["origin"] != "core"));
    let (_, v) = call(&st, "GET", "/api/rules?core=true", None, &[]).await;
    assert!(v["rules"].as_array().unwrap().iter().any(|r| r["origin"] == "core"));

    let (s, _) = call(&st, "DELETE", &format!("/api/rules/{id}"), None, &[("x-user-id", "bob")]).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let core_id = v["rules"][0]["id"].as_str().unwrap().to_string();
    let (s, _) = call(&st, "DELETE", &format!("/api/rules/{core_id}"), None, &[("x-user-id", "core")]).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = call(&st, "DELETE", &format!("/api/rules/{id}"), None, &[]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&st, "DELETE", &format!("/api/rules/{id}"), None, &[("x-user-id", "ann")]).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = call(&st, "DELETE", &format!("/api/rules/{id}"), None, &[("x-user-id", "ann")]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn two_sessions_do_not_interfere() {
    let st = state();
    let a = open(&st, "ann", "fig1").await;
    let b = open(&st, "bob", "fig1").await;
    call(&st, "POST", "/api/utterance", Some(json!({"session": a, "text": "move down"})), &[]).await;
    let (s, _) = call(&st, "POST", "/api/choose", Some(json!({"session": a, "candidate_id": 0})), &[]).await;
    assert_eq!(s, StatusCode::OK);
    let (_, v) = call(&st, "GET", &format!("/api/session/{b}"), None, &[]).await;
    assert_eq!(v["world"]["robot"], json!({"x": 3, "y": 0, "holding": []}));
    let (s, _) = call(&st, "POST", "/api/choose", Some(json!({"session": b, "candidate_id": 0})), &[]).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn worlds_endpoint() {
    let st = state();
    let (_, v) = call(&st, "GET", "/api/worlds", None, &[]).await;
    assert_eq!(v["worlds"], json!(["fig1", "sorting"]));
    let (s, v) = call(&st, "GET", "/api/worlds/sorting", None, &[]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["items"].as_array().unwrap().len(), 12);
}
