//! Append-only JSONL store of committed frames and its query engine.
//!
//! One [`IndexRecord`] per line. Opening reads a snapshot into memory and
//! builds a per-field inverted map. A crash mid-append can only leave an
//! unterminated last line; it is skipped on load and cut off before the next
//! append. Any other malformed line is an error.

mod gold;
mod import;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::resources::VOCABULARY;
use crate::schema::{validate_dna, EnumField, ScenarioDna, ValidationReport, RISK_MAX, RISK_MIN};
use crate::verifier::CandidateScore;

pub use gold::{append_gold, load_gold, load_gold_jsonl};
pub use import::{import_released_gold, import_released_index, ImportSummary};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("frame {0} is already indexed")]
    DuplicateFrame(String),
    #[error("record for {frame_id} has invalid DNA: {report}")]
    InvalidRecord { frame_id: String, report: ValidationReport },
    #[error("{path}:{line}: corrupt record: {detail}")]
    Corrupt { path: String, line: usize, detail: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoutSummary {
    pub scout_name: String,
    /// None when the scout's DNA failed to parse.
    pub risk_score: Option<i64>,
    pub latency_s: f64,
    pub completion_tokens: u64,
    #[serde(default)]
    pub tokens_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub frame_id: String,
    pub scene_id: String,
    pub dna: ScenarioDna,
    pub winner_score: CandidateScore,
    pub scout_summaries: Vec<ScoutSummary>,
    pub flagged_for_review: Vec<String>,
    pub created_at: DateTime<Utc>,
    /// Fields from imported artifacts with no counterpart here, kept verbatim.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Query {
    /// Field must take one of the listed values.
    #[serde(default)]
    pub fields: BTreeMap<EnumField, Vec<String>>,
    #[serde(default)]
    pub risk_min: Option<i64>,
    #[serde(default)]
    pub risk_max: Option<i64>,
    /// Every listed tag must be present.
    #[serde(default)]
    pub tags: Vec<String>,
    /// Case-insensitive substring of the description.
    #[serde(default)]
    pub text: Option<String>,
}

impl Query {
    pub fn validate(&self) -> Result<(), IndexError> {
        for (name, bound) in [("risk_min", self.risk_min), ("risk_max", self.risk_max)] {
            if let Some(b) = bound {
                if !(RISK_MIN..=RISK_MAX).contains(&b) {
                    return Err(IndexError::InvalidQuery(format!("{name}={b} outside [0, 10]")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.risk_min, self.risk_max) {
            if lo > hi {
                return Err(IndexError::InvalidQuery(format!("risk_min {lo} > risk_max {hi}")));
            }
        }
        Ok(())
    }

    pub fn matches(&self, dna: &ScenarioDna) -> bool {
        self.fields.iter().all(|(f, values)| values.iter().any(|v| v == dna.get(*f)))
            && self.risk_min.is_none_or(|lo| dna.risk() >= lo)
            && self.risk_max.is_none_or(|hi| dna.risk() <= hi)
            && self.tags.iter().all(|t| dna.has_tag(t))
            && self
                .text
                .as_ref()
                .is_none_or(|t| dna.description.to_lowercase().contains(&t.to_lowercase()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub n_records: usize,
    /// Every vocabulary value appears, zeros included.
    pub fields: BTreeMap<String, BTreeMap<String, u64>>,
    pub traffic_controls: BTreeMap<String, u64>,
    pub tags: BTreeMap<String, u64>,
    /// Index i counts records with risk_score == i.
    pub risk_histogram: Vec<u64>,
    pub flagged_records: usize,
}

#[derive(Debug)]
pub struct IndexStore {
    path: PathBuf,
    records: Vec<IndexRecord>,
    by_frame: HashMap<String, usize>,
    by_field: HashMap<EnumField, HashMap<String, Vec<usize>>>,
    /// Byte length of the well-formed prefix; `Some` when a torn tail exists.
    truncate_to: Option<u64>,
}

impl IndexStore {
    /// Loads a snapshot; a missing file is an empty index.
    pub fn open(path: &Path) -> Result<Self, IndexError> {
        let mut store = IndexStore {
            path: path.to_path_buf(),
            records: Vec::new(),
            by_frame: HashMap::new(),
            by_field: HashMap::new(),
            truncate_to: None,
        };
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(store),
            Err(e) => return Err(io_err(path)(e)),
        };
        let shown = path.display().to_string();
        let mut offset = 0usize;
        let mut line_no = 0;
        while offset < bytes.len() {
            line_no += 1;
            let rest = &bytes[offset..];
            let Some(nl) = rest.iter().position(|b| *b == b'\n') else {
                tracing::warn!(path = %shown, line = line_no, bytes = rest.len(), "skipping torn tail");
                store.truncate_to = Some(offset as u64);
                break;
            };
            let line = &rest[..nl];
            offset += nl + 1;
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let record: IndexRecord = serde_json::from_slice(line).map_err(|e| IndexError::Corrupt {
                path: shown.clone(),
                line: line_no,
                detail: e.to_string(),
            })?;
            if store.by_frame.contains_key(&record.frame_id) {
                return Err(IndexError::Corrupt {
                    path: shown.clone(),
                    line: line_no,
                    detail: format!("duplicate frame {}", record.frame_id),
                });
            }
            store.insert(record);
        }
        Ok(store)
    }

    fn insert(&mut self, record: IndexRecord) {
        let i = self.records.len();
        self.by_frame.insert(record.frame_id.clone(), i);
        for field in EnumField::ALL {
            self.by_field
                .entry(field)
                .or_default()
                .entry(record.dna.get(field).to_string())
                .or_default()
                .push(i);
        }
        self.records.push(record);
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IndexRecord] {
        &self.records
    }

    pub fn get(&self, frame_id: &str) -> Option<&IndexRecord> {
        self.by_frame.get(frame_id).map(|i| &self.records[*i])
    }

    pub fn contains(&self, frame_id: &str) -> bool {
        self.by_frame.contains_key(frame_id)
    }

    pub fn had_torn_tail(&self) -> bool {
        self.truncate_to.is_some()
    }

    /// Durable append: the line is flushed and synced before returning.
    pub fn append(&mut self, record: IndexRecord) -> Result<(), IndexError> {
        let report = validate_dna(&record.dna);
        if !report.valid {
            return Err(IndexError::InvalidRecord { frame_id: record.frame_id, report });
        }
        if self.contains(&record.frame_id) {
            return Err(IndexError::DuplicateFrame(record.frame_id));
        }
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        if let Some(len) = self.truncate_to.take() {
            let f = OpenOptions::new().write(true).open(&self.path).map_err(io_err(&self.path))?;
            f.set_len(len).map_err(io_err(&self.path))?;
            f.sync_all().map_err(io_err(&self.path))?;
        }
        let mut line = serde_json::to_vec(&record).expect("index records serialize");
        line.push(b'\n');
        let mut file: File =
            OpenOptions::new().create(true).append(true).open(&self.path).map_err(io_err(&self.path))?;
        file.write_all(&line).map_err(io_err(&self.path))?;
        file.sync_data().map_err(io_err(&self.path))?;
        self.insert(record);
        Ok(())
    }

    /// Matching records ordered by risk (descending) then frame id.
    pub fn query(&self, q: &Query) -> Result<Vec<&IndexRecord>, IndexError> {
        q.validate()?;
        let mut candidates: Option<BTreeSet<usize>> = None;
        for (field, values) in &q.fields {
            let hits: BTreeSet<usize> = values
                .iter()
                .filter_map(|v| self.by_field.get(field).and_then(|m| m.get(v)))
                .flatten()
                .copied()
                .collect();
            candidates = Some(match candidates {
                Some(c) => c.intersection(&hits).copied().collect(),
                None => hits,
            });
        }
        let indices: Vec<usize> = match candidates {
            Some(c) => c.into_iter().collect(),
            None => (0..self.records.len()).collect(),
        };
        let mut out: Vec<&IndexRecord> =
            indices.into_iter().map(|i| &self.records[i]).filter(|r| q.matches(&r.dna)).collect();
        out.sort_by(|a, b| b.dna.risk().cmp(&a.dna.risk()).then_with(|| a.frame_id.cmp(&b.frame_id)));
        Ok(out)
    }

    pub fn stats(&self) -> IndexStats {
        stats_of(self.records.iter())
    }
}

pub fn stats_of<'a>(records: impl Iterator<Item = &'a IndexRecord>) -> IndexStats {
    let zeroed = |field: &str| -> BTreeMap<String, u64> {
        VOCABULARY.tokens(field).iter().map(|t| (t.clone(), 0)).collect()
    };
    let mut fields: BTreeMap<String, BTreeMap<String, u64>> =
        EnumField::ALL.iter().map(|f| (f.name().to_string(), zeroed(f.name()))).collect();
    let mut traffic_controls = zeroed("traffic_controls");
    let mut tags = zeroed("wod_e2e_tags");
    let mut risk_histogram = vec![0; (RISK_MAX - RISK_MIN + 1) as usize];
    let mut n_records = 0;
    let mut flagged_records = 0;
    for r in records {
        n_records += 1;
        for f in EnumField::ALL {
            *fields.get_mut(f.name()).expect("field").entry(r.dna.get(f).to_string()).or_default() += 1;
        }
        for c in &r.dna.road_topology.traffic_controls {
            *traffic_controls.entry(c.clone()).or_default() += 1;
        }
        for t in &r.dna.wod_e2e_tags {
            *tags.entry(t.clone()).or_default() += 1;
        }
        if let Ok(slot) = usize::try_from(r.dna.risk() - RISK_MIN) {
            if let Some(bucket) = risk_histogram.get_mut(slot) {
                *bucket += 1;
            }
        }
        if !r.flagged_for_review.is_empty() {
            flagged_records += 1;
        }
    }
    IndexStats { n_records, fields, traffic_controls, tags, risk_histogram, flagged_records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::nominal_dna;

    pub(crate) fn record(id: &str, risk: i64, tags: &[&str]) -> IndexRecord {
        let mut dna = nominal_dna();
        dna.scenario_criticality.risk_score = risk;
        dna.wod_e2e_tags = tags.iter().map(|t| t.to_string()).collect();
        IndexRecord {
            frame_id: id.into(),
            scene_id: "s".into(),
            dna,
            winner_score: CandidateScore { candidate_index: 0, g: 1, c: 1, h: 0, reward: 5.0, verdicts: vec![] },
            scout_summaries: vec![],
            flagged_for_review: vec![],
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            extras: BTreeMap::new(),
        }
    }

    fn store_with(records: Vec<IndexRecord>) -> (tempfile::TempDir, IndexStore) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = IndexStore::open(&dir.path().join("index.jsonl")).unwrap();
        for r in records {
            store.append(r).unwrap();
        }
        (dir, store)
    }

    #[test]
    fn append_then_load() {
        let (_dir, store) = store_with(vec![record("a", 7, &[])]);
        let reloaded = IndexStore::open(store.path()).unwrap();
        assert_eq!(reloaded.records(), store.records());
    }

    #[test]
    fn duplicate_frame_rejected() {
        let (_dir, mut store) = store_with(vec![record("a", 7, &[])]);
        assert!(matches!(store.append(record("a", 1, &[])), Err(IndexError::DuplicateFrame(_))));
    }

    #[test]
    fn torn_tail_recovered_and_truncated() {
        let (_dir, store) = store_with(vec![record("a", 7, &[]), record("b", 5, &[]), record("c", 2, &[])]);
        let path = store.path().to_path_buf();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 20);
        fs::write(&path, &bytes).unwrap();
        let mut reloaded = IndexStore::open(&path).unwrap();
        assert_eq!(reloaded.len(), 2);
        assert!(reloaded.had_torn_tail());
        reloaded.append(record("c", 2, &[])).unwrap();
        let again = IndexStore::open(&path).unwrap();
        assert_eq!(again.records(), store.records());
        assert!(!again.had_torn_tail());
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let (_dir, store) = store_with(vec![record("a", 7, &[]), record("b", 5, &[])]);
        let path = store.path().to_path_buf();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, format!("{{broken\n{text}")).unwrap();
        assert!(matches!(IndexStore::open(&path), Err(IndexError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn query_fixture() {
        let (_dir, store) = store_with(vec![
            record("x", 2, &[]),
            record("y", 5, &["lane_diversion"]),
            record("z", 7, &["lane_diversion"]),
        ]);
        let q = Query { tags: vec!["lane_diversion".into()], risk_min: Some(5), ..Default::default() };
        let ids: Vec<_> = store.query(&q).unwrap().iter().map(|r| r.frame_id.as_str()).collect();
        assert_eq!(ids, ["z", "y"]);
        assert_eq!(store.query(&Query::default()).unwrap().len(), 3);
        let bad = Query { risk_min: Some(11), ..Default::default() };
        assert!(matches!(store.query(&bad), Err(IndexError::InvalidQuery(_))));
    }

    #[test]
    fn query_by_field_and_text() {
        let mut r = record("w", 4, &[]);
        r.dna.odd_attributes.weather = "rain".into();
        r.dna.description = "Wet road near a Bus stop".into();
        let (_dir, store) = store_with(vec![r, record("d", 3, &[])]);
        let q = Query {
            fields: [(EnumField::Weather, vec!["rain".to_string(), "snow".to_string()])].into(),
            text: Some("bus STOP".into()),
            ..Default::default()
        };
        let hits = store.query(&q).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].frame_id, "w");
    }

    #[test]
    fn stats_counts() {
        let (_dir, empty) = store_with(vec![]);
        let s = empty.stats();
        assert_eq!(s.n_records, 0);
        assert!(s.fields["weather"].values().all(|n| *n == 0));
        assert_eq!(s.risk_histogram, vec![0; 11]);

        let mut a = record("a", 7, &["construction"]);
        a.dna.odd_attributes.weather = "rain".into();
        let mut b = record("b", 5, &[]);
        b.dna.odd_attributes.weather = "rain".into();
        let (_dir, store) = store_with(vec![a, b, record("c", 2, &[])]);
        let s = store.stats();
        assert_eq!(s.fields["weather"]["rain"], 2);
        assert_eq!(s.tags["construction"], 1);
        assert_eq!(s.risk_histogram[7], 1);
        assert_eq!(s.risk_histogram[5], 1);
        assert_eq!(s.risk_histogram[2], 1);
        assert_eq!(s.risk_histogram.iter().sum::<u64>(), 3);
    }
}
