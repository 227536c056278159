use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cxg_core::cost::{CostParams, Money};
use cxg_core::samples::simple_candidate;
use cxg_core::store::{Store, StoreConfig};
use cxg_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn cand(id: &str, verb: &str, prep: &str) -> cxg_core::CandidateInstance {
    let mut c = simple_candidate(id, (&format!("{verb}ed"), verb), "cup", prep, "table");
    c.candidate_id = id.to_string();
    c
}

fn state_with(store: Store, token: Option<&str>) -> Arc<AppState> {
    let params = CostParams::single_price(Money::parse("0.2").unwrap(), Money::parse("0.000002").unwrap()).unwrap();
    let mut state = AppState::new(store, params, 1000);
    state.token = token.map(String::from);
    Arc::new(state)
}

fn app(token: Option<&str>) -> (Router, Arc<AppState>) {
    let mut store = Store::in_memory(StoreConfig::default());
    store
        .add_candidates(vec![
            cand("a", "put", "on"),
            cand("b", "put", "in"),
            cand("c", "put", "on"),
            cand("d", "laugh", "off"),
        ])
        .unwrap();
    let state = state_with(store, token);
    (router(state.clone(), None), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

#[tokio::test]
async fn next_carries_spans_inside_the_text() {
    let (app, _) = app(None);
    let (status, body) = call(&app, "GET", "/api/next", None).await;
    assert_eq!(status, StatusCode::OK);
    let c = &body["candidate"];
    assert_eq!(c["candidate_id"], "a");
    let text = c["text"].as_str().unwrap();
    let verb = &c["spans"]["verb"];
    let (s, e) = (verb[0].as_u64().unwrap() as usize, verb[1].as_u64().unwrap() as usize);
    assert_eq!(&text[s..e], "puted");
    let mut spans: Vec<(u64, u64)> = c["spans"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| (v[0].as_u64().unwrap(), v[1].as_u64().unwrap()))
        .collect();
    spans.sort();
    assert!(spans.windows(2).all(|w| w[0].1 <= w[1].0));
    assert_eq!(c["quota"]["frequency"], 3);
}

#[tokio::test]
async fn label_advances_queue_and_updates_progress() {
    let (app, state) = app(None);
    let (status, rec) = call(
        &app,
        "POST",
        "/api/label",
        Some(json!({"candidate_id": "a", "label": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["source"], "human");
    // "on" is used for positives, "c" still fits as a negative
    let (_, next) = call(&app, "GET", "/api/next", None).await;
    assert_eq!(next["candidate"]["candidate_id"], "b");
    let (_, progress) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(progress["human_labeled"], 1);
    assert_eq!(progress["human_positive"], 1);
    assert_eq!(progress["verbs"][0]["verb"], "put");
    assert_eq!(progress["verbs"][0]["positives"], 1);
    assert_eq!(state.store.lock().unwrap().state().human_count(), 1);

    let (_, view) = call(&app, "GET", "/api/candidates/a", None).await;
    assert_eq!(view["label"], true);
}

#[tokio::test]
async fn unknown_candidate_is_404_and_bad_body_is_4xx() {
    let (app, _) = app(None);
    let (status, body) = call(
        &app,
        "POST",
        "/api/label",
        Some(json!({"candidate_id": "zz", "label": true})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("zz"));
    let (status, _) = call(&app, "POST", "/api/label", Some(json!({"candidate_id": "a"}))).await;
    assert!(status.is_client_error());
    let (status, _) = call(&app, "GET", "/api/candidates/zz", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn skip_removes_from_queue() {
    let (app, _) = app(None);
    let (status, _) = call(&app, "POST", "/api/skip", Some(json!({"candidate_id": "a"}))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (_, next) = call(&app, "GET", "/api/next", None).await;
    assert_eq!(next["candidate"]["candidate_id"], "b");
}

#[tokio::test]
async fn exhausted_queue_returns_null() {
    let (app, _) = app(None);
    for id in ["a", "b", "c", "d"] {
        call(
            &app,
            "POST",
            "/api/label",
            Some(json!({"candidate_id": id, "label": false})),
        )
        .await;
    }
    let (status, next) = call(&app, "GET", "/api/next", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(next["candidate"].is_null());
}

#[tokio::test]
async fn export_conflicts_and_cost() {
    let (app, state) = app(None);
    call(
        &app,
        "POST",
        "/api/label",
        Some(json!({"candidate_id": "a", "label": true})),
    )
    .await;
    call(
        &app,
        "POST",
        "/api/label",
        Some(json!({"candidate_id": "c", "label": false})),
    )
    .await;
    let (_, conflicts) = call(&app, "GET", "/api/conflicts", None).await;
    assert_eq!(conflicts.as_array().unwrap().len(), 1);
    assert_eq!(conflicts[0]["quad"]["verb"], "put");

    let (status, export) = call(&app, "GET", "/api/export?filter=human%2Bpositive", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(export["lines"].as_array().unwrap().len(), 1);
    assert_eq!(export["lines"][0]["candidate_id"], "a");
    let (status, _) = call(&app, "GET", "/api/export?filter=robots", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // no model labels yet: the projection has no yield and no division by zero
    let (status, cost) = call(&app, "GET", "/api/cost", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(cost["cost_per_tp"].is_null());
    assert_eq!(cost["tp_required"], 1000);
    drop(state);
}

#[tokio::test]
async fn token_is_enforced_when_configured() {
    let (app, _) = app(Some("s3cret"));
    let (status, _) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let req = Request::get("/api/progress")
        .header("authorization", "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::OK);
    let req = Request::get("/api/progress")
        .header("x-annotation-token", "s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::OK);
}

#[tokio::test]
async fn root_serves_placeholder_or_static_bundle() {
    let (app, state) = app(None);
    let (status, body) = call(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.as_str().unwrap().contains("/api"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>ui</p>").unwrap();
    let with_ui = router(state, Some(dir.path().to_path_buf()));
    let (status, body) = call(&with_ui, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "<p>ui</p>");
}

#[tokio::test]
async fn labels_survive_reopening_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let mut store = Store::open(&path, StoreConfig::default()).unwrap();
    store
        .add_candidates(vec![cand("a", "put", "on"), cand("b", "put", "in")])
        .unwrap();
    let app = router(state_with(store, None), None);
    call(
        &app,
        "POST",
        "/api/label",
        Some(json!({"candidate_id": "a", "label": true})),
    )
    .await;
    drop(app);

    let app = router(
        state_with(Store::open(&path, StoreConfig::default()).unwrap(), None),
        None,
    );
    let (_, view) = call(&app, "GET", "/api/candidates/a", None).await;
    assert_eq!(view["label"], true);
    let (_, next) = call(&app, "GET", "/api/next", None).await;
    assert_eq!(next["candidate"]["candidate_id"], "b");
}
