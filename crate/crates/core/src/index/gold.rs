//! Human-verified labels: append-only JSONL, last write per frame wins.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::Path;

use super::{io_err, IndexError};
use crate::eval::GoldLabel;

/// Reads every label; a later line for the same frame replaces the earlier
/// one but keeps its position. A missing file yields no labels.
pub fn load_gold_jsonl(path: &Path) -> Result<Vec<GoldLabel>, IndexError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let shown = path.display().to_string();
    let mut labels: Vec<GoldLabel> = Vec::new();
    let mut position: HashMap<String, usize> = HashMap::new();
    let terminated = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let label: GoldLabel = match serde_json::from_str(line) {
            Ok(l) => l,
            Err(_) if i + 1 == lines.len() && !terminated => {
                tracing::warn!(path = %shown, line = i + 1, "skipping torn tail");
                break;
            }
            Err(e) => return Err(IndexError::Corrupt { path: shown, line: i + 1, detail: e.to_string() }),
        };
        match position.get(&label.frame_id) {
            Some(&p) => labels[p] = label,
            None => {
                position.insert(label.frame_id.clone(), labels.len());
                labels.push(label);
            }
        }
    }
    Ok(labels)
}

/// Like [`load_gold_jsonl`] but every label must validate.
pub fn load_gold(path: &Path) -> Result<Vec<GoldLabel>, IndexError> {
    let labels = load_gold_jsonl(path)?;
    for label in &labels {
        label.validate().map_err(|e| IndexError::Corrupt {
            path: path.display().to_string(),
            line: 0,
            detail: e.to_string(),
        })?;
    }
    Ok(labels)
}

pub fn append_gold(path: &Path, label: &GoldLabel) -> Result<(), IndexError> {
    label.validate().map_err(|e| match e {
        crate::eval::EvalError::InvalidGold { frame_id, report } => IndexError::InvalidRecord { frame_id, report },
        other => IndexError::InvalidQuery(other.to_string()),
    })?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut line = serde_json::to_vec(label).expect("gold labels serialize");
    line.push(b'\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    file.write_all(&line).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::nominal_dna;

    #[test]
    fn last_write_wins_in_first_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.jsonl");
        let mut d = nominal_dna();
        append_gold(&path, &GoldLabel::new("a", d.clone(), "x")).unwrap();
        append_gold(&path, &GoldLabel::new("b", d.clone(), "x")).unwrap();
        d.scenario_criticality.risk_score = 7;
        append_gold(&path, &GoldLabel::new("a", d, "y")).unwrap();
        let labels = load_gold(&path).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0].frame_id, "a");
        assert_eq!(labels[0].dna.risk(), 7);
        assert_eq!(labels[0].annotator, "y");
    }

    #[test]
    fn invalid_gold_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = nominal_dna();
        d.odd_attributes.weather = "drizzle".into();
        let err = append_gold(&dir.path().join("g.jsonl"), &GoldLabel::new("a", d, "x")).unwrap_err();
        assert!(matches!(err, IndexError::InvalidRecord { .. }));
        assert!(load_gold(&dir.path().join("missing.jsonl")).unwrap().is_empty());
    }
}
