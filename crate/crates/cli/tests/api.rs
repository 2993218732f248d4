use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use scenemine_cli::{router, AppState};
use scenemine_core::pipeline::{run_mine, simulate, PipelineConfig, RunOptions};

async fn mined(dir: &Path) -> PipelineConfig {
    simulate::simulate(4, 3, 11).write_to(&dir.join("sim")).unwrap();
    let mut text = String::from(
        r#"
        seed = 11
        keyframes_per_scene = 3
        [paths]
        manifest = "sim/manifest.jsonl"
        detections = "sim/detections.jsonl"
        truth = "sim/truth.jsonl"
        gold = "gold.jsonl"
        index = "out/index.jsonl"
        "#,
    );
    for i in 0..3 {
        text.push_str(&format!("[[scouts]]\nname = \"scout-{i}\"\nendpoint_url = \"mock://scout\"\nmodel_id = \"synthetic\"\n"));
    }
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    let config = PipelineConfig::load(&path).unwrap();
    let summary = run_mine(&config, &RunOptions::default()).await.unwrap();
    assert_eq!(summary.committed, 12);
    config
}

fn app(config: &PipelineConfig) -> Router {
    router(Arc::new(AppState::from_config(config).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn frames_are_paginated() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&mined(dir.path()).await);

    let (status, body) = call(&app, "GET", "/frames?page=2&page_size=5", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["total"], 12);
    assert_eq!(body["pages"], 3);
    assert_eq!(body["frames"].as_array().unwrap().len(), 5);
    assert_eq!(body["frames"][0]["verified"], false);

    let (_, last) = call(&app, "GET", "/frames?page=3&page_size=5", None).await;
    assert_eq!(last["frames"].as_array().unwrap().len(), 2);
    let (_, beyond) = call(&app, "GET", "/frames?page=9", None).await;
    assert!(beyond["frames"].as_array().unwrap().is_empty());

    for bad in ["/frames?page=0", "/frames?page_size=0", "/frames?page_size=501", "/frames?page=x"] {
        assert_eq!(call(&app, "GET", bad, None).await.0, StatusCode::BAD_REQUEST, "{bad}");
    }
}

#[tokio::test]
async fn detail_carries_audit_and_404s_unknown() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&mined(dir.path()).await);

    let (status, body) = call(&app, "GET", "/frames/scene-0000-f00", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["scene_id"], "scene-0000");
    assert_eq!(body["scout_traces"].as_array().unwrap().len(), 3);
    assert!(!body["candidates"].as_array().unwrap().is_empty());
    assert!(body["inventory"].as_str().unwrap().contains("[CAM_"));
    assert_eq!(body["images"]["front_center"]["url"], "/frames/scene-0000-f00/images/front_center");
    assert_eq!(body["verified"], false);
    assert!(body["gold"].is_null());

    let (status, body) = call(&app, "GET", "/frames/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));
    assert_eq!(call(&app, "GET", "/frames/scene-0000-f00/images/rear", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn gold_submission_is_validated_and_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let config = mined(dir.path()).await;
    let app = app(&config);
    let id = "scene-0001-f01";
    let (_, detail) = call(&app, "GET", &format!("/frames/{id}"), None).await;
    let mut dna = detail["dna"].clone();

    dna["odd_attributes"]["weather"] = json!("drizzle");
    let (status, body) = call(&app, "POST", &format!("/frames/{id}/gold"), Some(json!({ "dna": dna, "annotator": "ana" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let violations = body["report"]["violations"].as_array().unwrap();
    assert!(violations.iter().any(|v| v["path"] == "odd_attributes.weather" && v["offending_value"] == "drizzle"), "{body}");
    assert_eq!(call(&app, "GET", &format!("/frames/{id}"), None).await.1["verified"], false);

    dna["odd_attributes"]["weather"] = detail["dna"]["odd_attributes"]["weather"].clone();
    dna["scenario_criticality"]["risk_score"] = json!(7);
    let (status, body) = call(&app, "POST", &format!("/frames/{id}/gold"), Some(json!({ "dna": dna, "annotator": "ana" }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["verified"], true);

    let (_, after) = call(&app, "GET", &format!("/frames/{id}"), None).await;
    assert_eq!(after["verified"], true);
    assert_eq!(after["gold"]["dna"]["scenario_criticality"]["risk_score"], 7);
    assert_eq!(after["gold"]["annotator"], "ana");

    // Survives a restart.
    let reloaded = self::app(&config);
    let (_, again) = call(&reloaded, "GET", &format!("/frames/{id}"), None).await;
    assert_eq!(again["gold"]["dna"]["scenario_criticality"]["risk_score"], 7);
    let (_, list) = call(&reloaded, "GET", "/frames", None).await;
    assert_eq!(list["verified"], 1);
}

#[tokio::test]
async fn gold_rejects_malformed_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&mined(dir.path()).await);
    let (_, detail) = call(&app, "GET", "/frames/scene-0000-f00", None).await;
    let dna = detail["dna"].clone();
    let uri = "/frames/scene-0000-f00/gold";

    assert_eq!(call(&app, "POST", uri, Some(json!([1, 2]))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "POST", uri, Some(json!({ "annotator": "ana" }))).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(call(&app, "POST", uri, Some(json!({ "dna": dna }))).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let wrong_frame = json!({ "dna": dna, "annotator": "ana", "frame_id": "scene-0003-f00" });
    assert_eq!(call(&app, "POST", uri, Some(wrong_frame)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_category = json!({ "dna": dna, "annotator": "ana", "category": "volcano" });
    assert_eq!(call(&app, "POST", uri, Some(bad_category)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let unknown = json!({ "dna": dna, "annotator": "ana" });
    assert_eq!(call(&app, "POST", "/frames/nope/gold", Some(unknown)).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn vocab_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&mined(dir.path()).await);

    let (status, vocab) = call(&app, "GET", "/vocab", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(vocab["fields"]["weather"].as_array().unwrap().contains(&json!("rain")));
    assert_eq!(vocab["risk_score"]["min"], 0);
    assert_eq!(vocab["risk_score"]["max"], 10);
    assert_eq!(vocab["categories"].as_array().unwrap().len(), 5);

    let (status, stats) = call(&app, "GET", "/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["index"]["n_records"], 12);
    assert_eq!(stats["verified_frames"], 0);
}
