//! Detector hits to the textual object inventory shown to scouts.
//!
//! Detections arrive precomputed as JSONL. A frame's inventory keeps every hit
//! strictly above the recall threshold, annotates it with its relative box
//! area as a proximity proxy, and renders one line per camera.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::resources::{normalize_label, TAXONOMY};

pub const DEFAULT_TAU_RECALL: f64 = 0.15;
pub const LARGE_ABOVE: f64 = 0.1;
pub const SMALL_BELOW: f64 = 0.01;
pub const NO_DETECTIONS: &str = "[NO DETECTIONS]";
pub const UNMAPPED_SUFFIX: &str = " (?)";

#[derive(Debug, thiserror::Error)]
pub enum InventoryError {
    #[error("image and box dimensions must be positive (box {w}x{h}, image {image_w}x{image_h})")]
    InvalidDimensions { w: f64, h: f64, image_w: f64, image_h: f64 },
    #[error("invalid detection{}: {reason}", frame.as_ref().map(|f| format!(" in frame {f}")).unwrap_or_default())]
    InvalidDetection { frame: Option<String>, reason: String },
    #[error("{path}:{line}: {source}")]
    Json { path: String, line: usize, source: serde_json::Error },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Camera {
    #[serde(rename = "FRONT_LEFT")]
    FrontLeft,
    #[serde(rename = "FRONT_CENTER", alias = "FRONT")]
    FrontCenter,
    #[serde(rename = "FRONT_RIGHT")]
    FrontRight,
}

impl Camera {
    /// Render order: left, center, right.
    pub const ALL: [Camera; 3] = [Camera::FrontLeft, Camera::FrontCenter, Camera::FrontRight];

    pub fn tag(self) -> &'static str {
        match self {
            Camera::FrontLeft => "[CAM_FRONT_LEFT]",
            Camera::FrontCenter => "[CAM_FRONT]",
            Camera::FrontRight => "[CAM_FRONT_RIGHT]",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeom {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: String,
    pub camera: Camera,
    pub class_name: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BoxGeom,
    pub image_w: f64,
    pub image_h: f64,
}

impl Detection {
    pub fn validate(&self) -> Result<(), InventoryError> {
        let fail = |reason: String| InventoryError::InvalidDetection {
            frame: Some(self.frame_id.clone()),
            reason,
        };
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(fail(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        let b = &self.bbox;
        if !(b.w > 0.0 && b.h > 0.0 && self.image_w > 0.0 && self.image_h > 0.0) {
            return Err(fail(format!(
                "non-positive size (box {}x{}, image {}x{})",
                b.w, b.h, self.image_w, self.image_h
            )));
        }
        if b.x < 0.0 || b.y < 0.0 || b.x + b.w > self.image_w || b.y + b.h > self.image_h {
            return Err(fail(format!(
                "box ({}, {}, {}, {}) exceeds image {}x{}",
                b.x, b.y, b.w, b.h, self.image_w, self.image_h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeBucket {
    Large,
    Med,
    Small,
}

impl fmt::Display for SizeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeBucket::Large => "Large",
            SizeBucket::Med => "Med",
            SizeBucket::Small => "Small",
        })
    }
}

pub fn compute_relative_size(bbox: &BoxGeom, image_w: f64, image_h: f64) -> Result<f64, InventoryError> {
    if !(bbox.w > 0.0 && bbox.h > 0.0 && image_w > 0.0 && image_h > 0.0) {
        return Err(InventoryError::InvalidDimensions { w: bbox.w, h: bbox.h, image_w, image_h });
    }
    Ok((bbox.w * bbox.h) / (image_w * image_h))
}

pub fn bucket_size(s_rel: f64) -> SizeBucket {
    if s_rel > LARGE_ABOVE {
        SizeBucket::Large
    } else if s_rel < SMALL_BELOW {
        SizeBucket::Small
    } else {
        SizeBucket::Med
    }
}

/// Keeps detections with confidence strictly above `tau_recall`, in input order.
pub fn filter_detections(detections: &[Detection], tau_recall: f64) -> Vec<Detection> {
    detections.iter().filter(|d| d.confidence > tau_recall).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "label")]
pub enum TaxonomyMatch {
    Mapped(String),
    /// Normalized raw label with no taxonomy entry.
    Unmapped(String),
}

impl TaxonomyMatch {
    pub fn class(&self) -> Option<&str> {
        match self {
            TaxonomyMatch::Mapped(c) => Some(c),
            TaxonomyMatch::Unmapped(_) => None,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            TaxonomyMatch::Mapped(c) | TaxonomyMatch::Unmapped(c) => c,
        }
    }
}

pub fn map_class_to_taxonomy(raw_label: &str) -> TaxonomyMatch {
    let normalized = normalize_label(raw_label);
    if TAXONOMY.contains(&normalized) {
        return TaxonomyMatch::Mapped(normalized);
    }
    match TAXONOMY.synonym(&normalized) {
        Some(class) => TaxonomyMatch::Mapped(class.to_string()),
        None => TaxonomyMatch::Unmapped(normalized),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryEntry {
    pub detection: Detection,
    pub class: TaxonomyMatch,
    pub s_rel: f64,
    pub size_bucket: SizeBucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInventory {
    pub frame_id: String,
    pub entries: Vec<InventoryEntry>,
    pub rendered_text: String,
    pub tau_recall: f64,
}

impl ObjectInventory {
    /// Filters, annotates and renders the detections of one frame. Detections
    /// for other frames are ignored.
    pub fn build(frame_id: &str, detections: &[Detection], tau_recall: f64) -> Result<Self, InventoryError> {
        if !(0.0..1.0).contains(&tau_recall) {
            return Err(InventoryError::InvalidDetection {
                frame: Some(frame_id.to_string()),
                reason: format!("tau_recall {tau_recall} outside [0, 1)"),
            });
        }
        let own: Vec<Detection> = detections.iter().filter(|d| d.frame_id == frame_id).cloned().collect();
        let mut entries = Vec::new();
        for detection in filter_detections(&own, tau_recall) {
            detection.validate()?;
            let s_rel = compute_relative_size(&detection.bbox, detection.image_w, detection.image_h)?;
            entries.push(InventoryEntry {
                class: map_class_to_taxonomy(&detection.class_name),
                size_bucket: bucket_size(s_rel),
                s_rel,
                detection,
            });
        }
        let mut inventory = ObjectInventory {
            frame_id: frame_id.to_string(),
            entries,
            rendered_text: String::new(),
            tau_recall,
        };
        inventory.rendered_text = render_inventory(&inventory);
        Ok(inventory)
    }

    pub fn empty(frame_id: &str, tau_recall: f64) -> Self {
        ObjectInventory {
            frame_id: frame_id.to_string(),
            entries: Vec::new(),
            rendered_text: NO_DETECTIONS.to_string(),
            tau_recall,
        }
    }

    /// Taxonomy classes present. Unmapped labels are excluded, so they never
    /// count as evidence.
    pub fn classes(&self) -> BTreeSet<&str> {
        self.entries.iter().filter_map(|e| e.class.class()).collect()
    }

    pub fn has_any(&self, classes: &[String]) -> bool {
        self.entries
            .iter()
            .filter_map(|e| e.class.class())
            .any(|c| classes.iter().any(|x| x == c))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn title_case(label: &str) -> String {
    label
        .split(' ')
        .map(|word| {
            let mut chars = word.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn display_label(class: &TaxonomyMatch, count: usize) -> String {
    let mut name = title_case(class.label());
    if count > 1 && !name.ends_with('s') {
        name.push('s');
    }
    if class.class().is_none() {
        name.push_str(UNMAPPED_SUFFIX);
    }
    name
}

/// Canonical text form: one line per non-empty camera, class groups ordered
/// by their best confidence.
pub fn render_inventory(inventory: &ObjectInventory) -> String {
    if inventory.entries.is_empty() {
        return NO_DETECTIONS.to_string();
    }
    let mut lines = Vec::new();
    for camera in Camera::ALL {
        let mut groups: BTreeMap<&TaxonomyMatch, Vec<&InventoryEntry>> = BTreeMap::new();
        for entry in inventory.entries.iter().filter(|e| e.detection.camera == camera) {
            groups.entry(&entry.class).or_default().push(entry);
        }
        if groups.is_empty() {
            continue;
        }
        let mut groups: Vec<(&TaxonomyMatch, Vec<&InventoryEntry>)> = groups.into_iter().collect();
        for (_, members) in &mut groups {
            members.sort_by(|a, b| b.detection.confidence.total_cmp(&a.detection.confidence));
        }
        groups.sort_by(|(ca, a), (cb, b)| {
            b[0].detection
                .confidence
                .total_cmp(&a[0].detection.confidence)
                .then_with(|| ca.label().cmp(cb.label()))
        });
        let rendered: Vec<String> = groups
            .iter()
            .map(|(class, members)| {
                let pairs: Vec<String> = members
                    .iter()
                    .map(|e| format!("{}/{:.2}", e.size_bucket, e.detection.confidence))
                    .collect();
                format!("{} {} ({})", members.len(), display_label(class, members.len()), pairs.join(", "))
            })
            .collect();
        lines.push(format!("{}: {}", camera.tag(), rendered.join("; ")));
    }
    lines.join("\n")
}

impl PartialOrd for TaxonomyMatch {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TaxonomyMatch {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.class().is_none(), self.label()).cmp(&(other.class().is_none(), other.label()))
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, InventoryError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| InventoryError::Io { path: display.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| InventoryError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| InventoryError::Json {
            path: display.clone(),
            line: i + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Reads and validates a detections JSONL file.
pub fn read_detections(path: &Path) -> Result<Vec<Detection>, InventoryError> {
    let detections: Vec<Detection> = read_jsonl(path)?;
    for d in &detections {
        d.validate()?;
    }
    Ok(detections)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeSlot {
    Start,
    Middle,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePaths {
    pub front_left: String,
    pub front_center: String,
    pub front_right: String,
}

impl ImagePaths {
    /// Left, center, right.
    pub fn ordered(&self) -> [&str; 3] {
        [&self.front_left, &self.front_center, &self.front_right]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: String,
    pub scene_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyframe_slot: Option<KeyframeSlot>,
    pub image_paths: ImagePaths,
}

pub fn read_manifest(path: &Path) -> Result<Vec<FrameEntry>, InventoryError> {
    let frames: Vec<FrameEntry> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for frame in &frames {
        if !seen.insert(frame.frame_id.as_str()) {
            return Err(InventoryError::InvalidDetection {
                frame: Some(frame.frame_id.clone()),
                reason: "frame_id listed twice in manifest".into(),
            });
        }
    }
    Ok(frames)
}
