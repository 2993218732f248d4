//! Adapter for externally produced index / gold files.
//!
//! Field names in third-party dumps vary, so each canonical field accepts a
//! list of aliases. Top-level keys that map to nothing are kept in `extras`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{append_gold, io_err, IndexError, IndexRecord, IndexStore};
use crate::eval::{primary_category, GoldLabel};
use crate::schema::{parse_dna, ScenarioDna};
use crate::verifier::CandidateScore;

const FRAME_KEYS: &[&str] = &["frame_id", "frame", "frame_token", "sample_token", "token", "image_id", "id"];
const SCENE_KEYS: &[&str] = &["scene_id", "scene", "scene_token", "scene_name"];
const DNA_KEYS: &[&str] = &["dna", "scenario_dna", "consensus", "consensus_dna", "prediction", "judge_output", "output"];
const CATEGORY_KEYS: &[&str] = &["category", "gold_category", "class"];
const ANNOTATOR_KEYS: &[&str] = &["annotator", "labeler", "verified_by"];
const TIME_KEYS: &[&str] = &["verified_at", "created_at", "timestamp"];
const FLAG_KEYS: &[&str] = &["flagged_for_review", "flags"];
const LAYER_KEYS: &[&str] = &[
    "odd_attributes",
    "road_topology",
    "key_interacting_agents",
    "scenario_criticality",
    "wod_e2e_tags",
    "description",
];

pub const IMPORTED_VERDICT: &str = "imported: not re-verified";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub imported: usize,
    /// (1-based entry number, reason)
    pub skipped: Vec<(usize, String)>,
}

fn read_entries(path: &Path) -> Result<Vec<Value>, IndexError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let shown = path.display().to_string();
    if text.trim_start().starts_with('[') {
        return serde_json::from_str::<Vec<Value>>(&text)
            .map_err(|e| IndexError::Corrupt { path: shown, line: 0, detail: e.to_string() });
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IndexError::Corrupt {
                path: shown.clone(),
                line: i + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

fn take_first(obj: &mut Map<String, Value>, keys: &[&str]) -> Option<Value> {
    keys.iter().find_map(|k| obj.remove(*k))
}

fn as_text(v: Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Pulls the DNA out of an entry, either nested under an alias or spread
/// over the top level.
fn take_dna(obj: &mut Map<String, Value>) -> Result<ScenarioDna, String> {
    let raw = match take_first(obj, DNA_KEYS) {
        Some(Value::String(s)) => s,
        Some(v @ Value::Object(_)) => v.to_string(),
        Some(other) => return Err(format!("DNA field is not an object: {other}")),
        None => {
            let layers: Map<String, Value> =
                LAYER_KEYS.iter().filter_map(|k| obj.remove(*k).map(|v| (k.to_string(), v))).collect();
            if layers.is_empty() {
                return Err("no DNA found".into());
            }
            Value::Object(layers).to_string()
        }
    };
    parse_dna(&raw).map_err(|e| e.to_string())
}

struct Common {
    frame_id: String,
    scene_id: Option<String>,
    dna: ScenarioDna,
    rest: Map<String, Value>,
}

fn common(entry: Value) -> Result<Common, String> {
    let Value::Object(mut obj) = entry else { return Err("entry is not a JSON object".into()) };
    let frame_id = take_first(&mut obj, FRAME_KEYS).and_then(as_text).ok_or("no frame id")?;
    let scene_id = take_first(&mut obj, SCENE_KEYS).and_then(as_text);
    let dna = take_dna(&mut obj)?;
    Ok(Common { frame_id, scene_id, dna, rest: obj })
}

fn timestamp(v: Option<Value>) -> DateTime<Utc> {
    v.and_then(as_text)
        .and_then(|s| DateTime::parse_from_rfc3339(&s).ok())
        .map(|t| t.with_timezone(&Utc))
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH)
}

/// Imports index entries into `store`. Frames already present and entries
/// without a valid DNA are skipped and reported.
pub fn import_released_index(src: &Path, store: &mut IndexStore) -> Result<ImportSummary, IndexError> {
    let mut summary = ImportSummary::default();
    for (i, entry) in read_entries(src)?.into_iter().enumerate() {
        let mut c = match common(entry) {
            Ok(c) => c,
            Err(reason) => {
                summary.skipped.push((i + 1, reason));
                continue;
            }
        };
        if store.contains(&c.frame_id) {
            summary.skipped.push((i + 1, format!("frame {} already indexed", c.frame_id)));
            continue;
        }
        let flagged = match take_first(&mut c.rest, FLAG_KEYS) {
            Some(Value::Array(items)) => items.into_iter().filter_map(as_text).collect(),
            Some(other) => {
                c.rest.insert("flagged_for_review".into(), other);
                Vec::new()
            }
            None => Vec::new(),
        };
        let created_at = timestamp(take_first(&mut c.rest, TIME_KEYS));
        let record = IndexRecord {
            scene_id: c.scene_id.unwrap_or_default(),
            frame_id: c.frame_id,
            dna: c.dna,
            winner_score: CandidateScore {
                candidate_index: 0,
                g: 0,
                c: 0,
                h: 0,
                reward: 0.0,
                verdicts: vec![IMPORTED_VERDICT.to_string()],
            },
            scout_summaries: Vec::new(),
            flagged_for_review: flagged,
            created_at,
            extras: c.rest.into_iter().collect::<BTreeMap<_, _>>(),
        };
        store.append(record)?;
        summary.imported += 1;
    }
    Ok(summary)
}

/// Converts gold entries and appends them to the gold file at `dest`.
pub fn import_released_gold(src: &Path, dest: &Path) -> Result<ImportSummary, IndexError> {
    let mut summary = ImportSummary::default();
    for (i, entry) in read_entries(src)?.into_iter().enumerate() {
        let mut c = match common(entry) {
            Ok(c) => c,
            Err(reason) => {
                summary.skipped.push((i + 1, reason));
                continue;
            }
        };
        let category = take_first(&mut c.rest, CATEGORY_KEYS)
            .and_then(as_text)
            .map(|s| s.trim().to_lowercase().replace([' ', '-'], "_"))
            .unwrap_or_else(|| primary_category(&c.dna));
        let label = GoldLabel {
            frame_id: c.frame_id,
            category,
            annotator: take_first(&mut c.rest, ANNOTATOR_KEYS).and_then(as_text).unwrap_or_else(|| "released".into()),
            verified_at: timestamp(take_first(&mut c.rest, TIME_KEYS)),
            dna: c.dna,
        };
        if let Err(e) = label.validate() {
            summary.skipped.push((i + 1, e.to_string()));
            continue;
        }
        append_gold(dest, &label)?;
        summary.imported += 1;
    }
    Ok(summary)
}
