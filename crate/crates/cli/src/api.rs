//! JSON API backing the curation UI.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::RwLock;

use scenemine_core::eval::{primary_category, tracked_categories, GoldLabel, NOMINAL};
use scenemine_core::gateway::{ParsedDna, ScoutReport};
use scenemine_core::index::{append_gold, load_gold_jsonl, stats_of, IndexRecord, IndexStore};
use scenemine_core::pipeline::{load_audit, FrameAudit, PipelineConfig};
use scenemine_core::resources::VOCABULARY;
use scenemine_core::schema::{parse_dna, DnaError, ScenarioDna, ValidationReport, Violation, RISK_MAX, RISK_MIN};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

pub struct AppState {
    records: Vec<IndexRecord>,
    by_id: HashMap<String, usize>,
    audit: HashMap<String, FrameAudit>,
    gold_path: PathBuf,
    gold: RwLock<HashMap<String, GoldLabel>>,
    /// Relative image paths resolve against this directory.
    images_base: Option<PathBuf>,
}

impl AppState {
    pub fn load(
        index: &Path,
        audit: &Path,
        gold: &Path,
        images_base: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        anyhow::ensure!(index.exists(), "index not found: {}", index.display());
        let records = IndexStore::open(index)?.records().to_vec();
        let by_id = records.iter().enumerate().map(|(i, r)| (r.frame_id.clone(), i)).collect();
        let gold_map = load_gold_jsonl(gold)?.into_iter().map(|g| (g.frame_id.clone(), g)).collect();
        Ok(AppState {
            records,
            by_id,
            audit: load_audit(audit)?,
            gold_path: gold.to_path_buf(),
            gold: RwLock::new(gold_map),
            images_base,
        })
    }

    pub fn from_config(config: &PipelineConfig) -> anyhow::Result<Self> {
        let p = &config.paths;
        Self::load(&p.index, &p.audit_path(), &p.gold, p.manifest.parent().map(Path::to_path_buf))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/frames", get(list_frames))
        .route("/frames/{id}", get(frame_detail))
        .route("/frames/{id}/images/{camera}", get(frame_image))
        .route("/frames/{id}/gold", post(post_gold))
        .route("/vocab", get(vocab))
        .route("/stats", get(stats))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn rejected(status: StatusCode, report: ValidationReport) -> Response {
    (status, Json(json!({ "error": report.to_string(), "report": report }))).into_response()
}

fn violation(path: &str, value: impl Into<String>, expected: &str) -> ValidationReport {
    ValidationReport::from_violations(vec![Violation {
        path: path.into(),
        offending_value: value.into(),
        expected: expected.into(),
    }])
}

#[derive(Debug, Deserialize)]
struct Page {
    page: Option<usize>,
    page_size: Option<usize>,
}

#[derive(Debug, Serialize)]
struct FrameRow<'a> {
    frame_id: &'a str,
    scene_id: &'a str,
    risk_score: i64,
    category: String,
    flagged: usize,
    verified: bool,
}

async fn list_frames(State(state): State<Arc<AppState>>, Query(q): Query<Page>) -> Response {
    let page = q.page.unwrap_or(1);
    let size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 || size == 0 || size > MAX_PAGE_SIZE {
        return error(StatusCode::BAD_REQUEST, format!("page >= 1 and 1 <= page_size <= {MAX_PAGE_SIZE}"));
    }
    let gold = state.gold.read().await;
    let rows: Vec<FrameRow> = state
        .records
        .iter()
        .skip((page - 1) * size)
        .take(size)
        .map(|r| FrameRow {
            frame_id: &r.frame_id,
            scene_id: &r.scene_id,
            risk_score: r.dna.risk(),
            category: primary_category(&r.dna),
            flagged: r.flagged_for_review.len(),
            verified: gold.contains_key(&r.frame_id),
        })
        .collect();
    let total = state.records.len();
    Json(json!({
        "page": page,
        "page_size": size,
        "total": total,
        "pages": total.div_ceil(size),
        "verified": gold.len(),
        "frames": rows,
    }))
    .into_response()
}

#[derive(Debug, Serialize)]
struct TraceView<'a> {
    scout_name: &'a str,
    model_id: &'a str,
    reasoning_trace: &'a str,
    dna: Option<&'a ScenarioDna>,
    parse_error: Option<&'a DnaError>,
    latency_s: f64,
    completion_tokens: u64,
}

fn trace_view(r: &ScoutReport) -> TraceView<'_> {
    TraceView {
        scout_name: &r.scout_name,
        model_id: &r.model_id,
        reasoning_trace: &r.reasoning_trace,
        dna: r.valid_dna(),
        parse_error: match &r.dna {
            ParsedDna::Failed(e) => Some(e),
            _ => None,
        },
        latency_s: r.latency_s,
        completion_tokens: r.completion_tokens,
    }
}

const CAMERAS: [&str; 3] = ["front_left", "front_center", "front_right"];

async fn frame_detail(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(&i) = state.by_id.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown frame {id}"));
    };
    let record = &state.records[i];
    let audit = state.audit.get(&id);
    let gold = state.gold.read().await.get(&id).cloned();
    let images: Value = match audit {
        Some(a) => CAMERAS
            .iter()
            .zip(a.image_paths.ordered())
            .map(|(cam, path)| (cam.to_string(), json!({ "path": path, "url": format!("/frames/{id}/images/{cam}") })))
            .collect::<serde_json::Map<_, _>>()
            .into(),
        None => Value::Null,
    };
    let candidates: Vec<Value> = audit
        .map(|a| {
            a.candidates
                .iter()
                .zip(&a.scores)
                .map(|(dna, score)| json!({ "dna": dna, "score": score }))
                .collect()
        })
        .unwrap_or_default();
    Json(json!({
        "frame_id": record.frame_id,
        "scene_id": record.scene_id,
        "images": images,
        "inventory": audit.map(|a| a.inventory_text.as_str()),
        "dna": record.dna,
        "flagged_for_review": record.flagged_for_review,
        "winner_score": record.winner_score,
        "winner_index": audit.map(|a| a.winner_index),
        "candidates": candidates,
        "scout_traces": audit.map(|a| a.reports.iter().map(trace_view).collect::<Vec<_>>()).unwrap_or_default(),
        "scout_failures": audit.map(|a| a.scout_failures.as_slice()).unwrap_or_default(),
        "scout_summaries": record.scout_summaries,
        "verified": gold.is_some(),
        "gold": gold,
    }))
    .into_response()
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    }
}

async fn frame_image(State(state): State<Arc<AppState>>, UrlPath((id, camera)): UrlPath<(String, String)>) -> Response {
    let Some(audit) = state.audit.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no images recorded for {id}"));
    };
    let Some(slot) = CAMERAS.iter().position(|c| *c == camera) else {
        return error(StatusCode::NOT_FOUND, format!("unknown camera {camera}"));
    };
    let raw = Path::new(audit.image_paths.ordered()[slot]);
    let path = match &state.images_base {
        Some(base) if raw.is_relative() => base.join(raw),
        _ => raw.to_path_buf(),
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())),
    }
}

/// Gold submission. The DNA goes through the same gate as scout output.
async fn post_gold(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    if !state.by_id.contains_key(&id) {
        return error(StatusCode::NOT_FOUND, format!("unknown frame {id}"));
    }
    let body: Value = match serde_json::from_slice(&body) {
        Ok(Value::Object(map)) => Value::Object(map),
        Ok(other) => return rejected(StatusCode::BAD_REQUEST, violation("", other.to_string(), "JSON object")),
        Err(e) => return rejected(StatusCode::BAD_REQUEST, violation("", e.to_string(), "JSON object")),
    };
    if let Some(fid) = body.get("frame_id").and_then(Value::as_str) {
        if fid != id {
            return rejected(StatusCode::UNPROCESSABLE_ENTITY, violation("frame_id", fid, &format!("{id} (the URL frame)")));
        }
    }
    let Some(dna_value @ Value::Object(_)) = body.get("dna") else {
        return rejected(StatusCode::UNPROCESSABLE_ENTITY, violation("dna", "missing", "Scenario DNA object"));
    };
    let dna = match parse_dna(&dna_value.to_string()) {
        Ok(d) => d,
        Err(e) => {
            let report = e.validation_report().cloned().unwrap_or_else(|| violation("dna", e.to_string(), "Scenario DNA"));
            return rejected(StatusCode::UNPROCESSABLE_ENTITY, report);
        }
    };
    let annotator = match body.get("annotator") {
        Some(Value::String(a)) if !a.trim().is_empty() => a.trim().to_string(),
        _ => return rejected(StatusCode::UNPROCESSABLE_ENTITY, violation("annotator", "missing", "non-empty string")),
    };
    let category = match body.get("category") {
        None | Some(Value::Null) => primary_category(&dna),
        Some(Value::String(c)) if c == NOMINAL || tracked_categories().contains(c) => c.clone(),
        Some(other) => {
            let expected = format!("one of {NOMINAL}, {}", tracked_categories().join(", "));
            return rejected(StatusCode::UNPROCESSABLE_ENTITY, violation("category", other.to_string(), &expected));
        }
    };
    let label = GoldLabel { frame_id: id.clone(), dna, category, annotator, verified_at: Utc::now() };
    let mut gold = state.gold.write().await;
    if let Err(e) = append_gold(&state.gold_path, &label) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    gold.insert(id.clone(), label.clone());
    (StatusCode::CREATED, Json(json!({ "frame_id": id, "verified": true, "gold": label }))).into_response()
}

async fn vocab() -> Json<Value> {
    let fields: serde_json::Map<String, Value> =
        VOCABULARY.fields().map(|(name, tokens)| (name.to_string(), json!(tokens))).collect();
    Json(json!({
        "fields": fields,
        "list_fields": ["traffic_controls", "wod_e2e_tags"],
        "risk_score": { "min": RISK_MIN, "max": RISK_MAX },
        "categories": tracked_categories(),
    }))
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<Value> {
    let gold = state.gold.read().await;
    let verified = state.records.iter().filter(|r| gold.contains_key(&r.frame_id)).count();
    Json(json!({ "index": stats_of(state.records.iter()), "verified_frames": verified }))
}
