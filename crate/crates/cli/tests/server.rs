use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pragma_cli::server::router;
use pragma_core::harness::session::{Directions, SessionStore};
use pragma_core::scone::synth::synth_generate;
use pragma_core::{Domain, Instance};
use serde_json::{json, Value};
use tower::ServiceExt;

fn instances() -> Vec<Instance> {
    synth_generate(Domain::Alchemy, 4, 3, 0.0, 11).unwrap()
}

fn app(results: Option<std::path::PathBuf>) -> (Router, Vec<Instance>) {
    let insts = instances();
    let mut dirs = Directions::new();
    let table: BTreeMap<String, Vec<Vec<String>>> =
        insts.iter().take(2).map(|i| (i.id.clone(), vec![vec!["do".into(), "something".into()]; 3])).collect();
    dirs.insert("s0".into(), table);
    (router(Arc::new(SessionStore::new(insts.clone(), dirs, results))), insts)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::Null), text)
}

async fn start(app: &Router, system: &str) -> String {
    let (st, v, _) = call(app, "POST", "/sessions", Some(json!({"domain": "alchemy", "system": system}))).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn gold_session_succeeds_and_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("results.jsonl");
    let (app, insts) = app(Some(log.clone()));
    let id = start(&app, "reference").await;
    let (_, view, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(view["instruction"], json!(insts[0].segments[0].sentence.join(" ")));
    assert_eq!(view["step"], 0);
    for (k, a) in insts[0].actions().iter().enumerate() {
        let (st, v, _) =
            call(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": serde_json::to_value(a).unwrap()}))).await;
        assert_eq!(st, StatusCode::OK, "{v}");
        assert_eq!(v["step"], k + 1);
        assert_eq!(v["done_sentence"], true);
    }
    let (st, v, _) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["success"], true);
    let (st, _, text) = call(&app, "GET", "/results", None).await;
    assert_eq!(st, StatusCode::OK);
    let row: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(row["session_id"], json!(id));
    assert_eq!(row["instance_id"], json!(insts[0].id));
    assert_eq!(row["success"], true);
    assert_eq!(std::fs::read_to_string(&log).unwrap(), text);
}

#[tokio::test]
async fn error_statuses() {
    let (app, insts) = app(None);
    let (st, v, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());
    let (st, _, _) = call(&app, "POST", "/sessions", Some(json!({"domain": "alchemy", "system": "nobody"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _, _) = call(&app, "POST", "/sessions", Some(json!({"domain": "scene"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let id = start(&app, "reference").await;
    let before = call(&app, "GET", &format!("/sessions/{id}"), None).await.1;
    // Pouring a beaker into itself is never legal.
    let bad = pragma_core::Action::Scone(pragma_core::scone::SconeAction::Pour { i: 1, j: 1 });
    let bad = json!({"action": serde_json::to_value(bad).unwrap()});
    let (st, _, _) = call(&app, "POST", &format!("/sessions/{id}/actions"), Some(bad)).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "GET", &format!("/sessions/{id}"), None).await.1, before);
    let (st, _, _) = call(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": {"nonsense": 1}}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let a = serde_json::to_value(insts[0].actions()[0]).unwrap();
    call(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": a}))).await;
    let (st, v, _) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["success"], false);
    let (st, _, _) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, _, _) = call(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": "next"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn systems_and_generated_directions() {
    let (app, insts) = app(None);
    let (_, v, _) = call(&app, "GET", "/systems", None).await;
    assert_eq!(v["systems"], json!(["reference", "s0"]));
    // Only the first two instances have s0 directions; rotation skips the rest.
    let ids: Vec<String> = {
        let mut out = Vec::new();
        for _ in 0..3 {
            let id = start(&app, "s0").await;
            out.push(id);
        }
        out
    };
    for (k, id) in ids.iter().enumerate() {
        let (_, v, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        assert_eq!(v["instruction"], "do something");
        assert_eq!(v["state"], insts[k % 2].initial_state.to_json());
    }
    let (_, v, _) = call(&app, "POST", &format!("/sessions/{}/actions", ids[0]), Some(json!({"action": "next"}))).await;
    assert_eq!(v["done_sentence"], true);
    assert_eq!(v["step"], 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_are_independent() {
    let (app, insts) = app(None);
    let mut handles = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        let insts = insts.clone();
        handles.push(tokio::spawn(async move {
            let id = start(&app, "reference").await;
            let (_, v, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
            let inst = insts.iter().find(|i| i.initial_state.to_json() == v["state"]).unwrap().clone();
            for a in inst.actions() {
                let (st, _, _) =
                    call(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": serde_json::to_value(a).unwrap()}))).await;
                assert_eq!(st, StatusCode::OK);
            }
            call(&app, "POST", &format!("/sessions/{id}/finish"), None).await.1["success"].clone()
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), true);
    }
    let (_, _, text) = call(&app, "GET", "/results", None).await;
    let mut ids: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["session_id"].as_str().unwrap().to_string())
        .collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 8);
}
